//! Training-time augmentation: zero-padded random crop plus horizontal flip.

use ndarray::{s, Array4};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Augment {
    /// Images are used as stored (rotated digits, for example).
    #[default]
    None,
    /// Pad by `pad` zeros on every side, crop back at a random offset,
    /// then flip horizontally with probability ½.
    CropFlip { pad: usize },
}

impl Augment {
    pub fn crop_flip() -> Self {
        Augment::CropFlip { pad: 4 }
    }

    /// Returns an augmented copy; the input is left untouched. Draws
    /// exactly three values per image for `CropFlip`, none for `None`.
    pub fn apply<R: Rng + ?Sized>(&self, batch: &Array4<f32>, rng: &mut R) -> Array4<f32> {
        match *self {
            Augment::None => batch.clone(),
            Augment::CropFlip { pad } => {
                let (n, c, h, w) = batch.dim();
                let mut out = Array4::<f32>::zeros((n, c, h, w));
                for i in 0..n {
                    let dy = rng.random_range(0..=2 * pad) as isize - pad as isize;
                    let dx = rng.random_range(0..=2 * pad) as isize - pad as isize;
                    let flip = rng.random_bool(0.5);
                    // out[y, x] = src[y + dy, x + dx] when inside, else 0
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (h as isize - dy).min(h as isize).max(0) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    if y0 < y1 && x0 < x1 {
                        let sy0 = (y0 as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let src = batch.slice(s![i, .., sy0..sy0 + (y1 - y0), sx0..sx0 + (x1 - x0)]);
                        out.slice_mut(s![i, .., y0..y1, x0..x1]).assign(&src);
                    }
                    if flip {
                        let flipped = out.slice(s![i, .., .., ..;-1]).to_owned();
                        out.slice_mut(s![i, .., .., ..]).assign(&flipped);
                    }
                }
                out
            }
        }
    }
}
