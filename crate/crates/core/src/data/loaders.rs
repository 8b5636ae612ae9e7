//! Readers for the on-disk dataset formats used by the presets, plus a
//! synthetic class-conditional generator for tests and smoke runs.
//!
//! * MNIST IDX files (`train-images-idx3-ubyte`, optionally `.gz`)
//! * CIFAR-10 / CIFAR-100 binary batches
//! * flat pixel CSV (`p0,…,p{n-1},label`, values 0–255, optionally `.gz`)
//! * individual image files through the `image` crate

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ImageSet, LabeledDataset};
use crate::error::{Error, Result};
use crate::imgproc::resize_bilinear;

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(Error::at_path(path))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(BufReader::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    open_maybe_gz(path)?.read_to_end(&mut buf).map_err(Error::at_path(path))?;
    Ok(buf)
}

fn first_existing(dir: &Path, names: &[&str]) -> Result<PathBuf> {
    names
        .iter()
        .map(|n| dir.join(n))
        .find(|p| p.exists())
        .ok_or_else(|| Error::data(format!("none of {names:?} found in {}", dir.display())))
}

/// Parsed IDX file: dimensions and raw `u8` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Idx {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Decodes an unsigned-byte IDX file (type code `0x08`).
pub fn decode_idx(bytes: &[u8]) -> Result<Idx> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format("bad IDX magic"));
    }
    if bytes[2] != 0x08 {
        return Err(Error::format(format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let rank = bytes[3] as usize;
    if rank == 0 || rank > 4 {
        return Err(Error::format(format!("unsupported IDX rank {rank}")));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::format("truncated IDX header"));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let total = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::format("IDX dimensions overflow"))?;
    if bytes.len() - header != total {
        return Err(Error::format(format!(
            "IDX payload has {} bytes, dimensions imply {total}",
            bytes.len() - header
        )));
    }
    Ok(Idx { dims, data: bytes[header..].to_vec() })
}

/// Combines an IDX image file (`N×H×W`) and label file (`N`) into a set.
pub fn idx_to_image_set(images: &Idx, labels: &Idx) -> Result<ImageSet> {
    if images.dims.len() != 3 || labels.dims.len() != 1 || images.dims[0] != labels.dims[0] {
        return Err(Error::format(format!(
            "incompatible IDX shapes {:?} and {:?}",
            images.dims, labels.dims
        )));
    }
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    let pixels = images.data.iter().map(|&b| b as f32 / 255.0).collect();
    let images = Array4::from_shape_vec((n, 1, h, w), pixels).expect("length checked");
    ImageSet::new(images, labels.data.iter().map(|&l| l as usize).collect())
}

pub fn load_mnist(dir: &Path) -> Result<LabeledDataset> {
    let load = |img: &str, lbl: &str| -> Result<ImageSet> {
        let ip = first_existing(dir, &[img, &format!("{img}.gz")])?;
        let lp = first_existing(dir, &[lbl, &format!("{lbl}.gz")])?;
        idx_to_image_set(&decode_idx(&read_all(&ip)?)?, &decode_idx(&read_all(&lp)?)?)
    };
    let ds = LabeledDataset {
        name: "mnist".into(),
        train: load("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?,
        test: load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?,
        num_classes: 10,
    };
    ds.validate()?;
    Ok(ds)
}

const CIFAR_PIXELS: usize = 3 * 32 * 32;

/// Decodes CIFAR binary records: `label_bytes` label bytes followed by
/// 3072 channel-major pixels. `label_index` selects which label byte is
/// used (CIFAR-100 stores coarse then fine).
pub fn decode_cifar(bytes: &[u8], label_bytes: usize, label_index: usize) -> Result<ImageSet> {
    if label_bytes == 0 || label_index >= label_bytes {
        return Err(Error::format("invalid CIFAR label layout"));
    }
    let rec = label_bytes + CIFAR_PIXELS;
    if bytes.len() % rec != 0 {
        return Err(Error::format(format!("CIFAR file length {} is not a multiple of {rec}", bytes.len())));
    }
    let n = bytes.len() / rec;
    let mut pixels = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for r in bytes.chunks_exact(rec) {
        labels.push(r[label_index] as usize);
        pixels.extend(r[label_bytes..].iter().map(|&b| b as f32 / 255.0));
    }
    ImageSet::new(Array4::from_shape_vec((n, 3, 32, 32), pixels).unwrap(), labels)
}

/// Reads `cifar-10-batches-bin` (or a directory containing it).
pub fn load_cifar10(dir: &Path) -> Result<LabeledDataset> {
    let dir = if dir.join("cifar-10-batches-bin").is_dir() { dir.join("cifar-10-batches-bin") } else { dir.to_path_buf() };
    let mut train = Vec::new();
    for i in 1..=5 {
        let p = dir.join(format!("data_batch_{i}.bin"));
        if !p.exists() {
            return Err(Error::data(format!("CIFAR-10 batch missing: {}", p.display())));
        }
        train.push(decode_cifar(&read_all(&p)?, 1, 0)?);
    }
    let parts: Vec<&ImageSet> = train.iter().collect();
    let test_path = dir.join("test_batch.bin");
    if !test_path.exists() {
        return Err(Error::data(format!("CIFAR-10 test batch missing: {}", test_path.display())));
    }
    let ds = LabeledDataset {
        name: "cifar10".into(),
        train: ImageSet::concat(&parts)?,
        test: decode_cifar(&read_all(&test_path)?, 1, 0)?,
        num_classes: 10,
    };
    ds.validate()?;
    Ok(ds)
}

/// Reads `cifar-100-binary` (or a directory containing it), fine labels.
pub fn load_cifar100(dir: &Path) -> Result<LabeledDataset> {
    let dir = if dir.join("cifar-100-binary").is_dir() { dir.join("cifar-100-binary") } else { dir.to_path_buf() };
    let read = |name: &str| -> Result<ImageSet> {
        let p = dir.join(name);
        if !p.exists() {
            return Err(Error::data(format!("CIFAR-100 file missing: {}", p.display())));
        }
        decode_cifar(&read_all(&p)?, 2, 1)
    };
    let ds = LabeledDataset { name: "cifar100".into(), train: read("train.bin")?, test: read("test.bin")?, num_classes: 100 };
    ds.validate()?;
    Ok(ds)
}

/// Parses flat pixel rows `p0,…,p{n-1},label` with 0–255 intensities.
pub fn parse_pixel_csv<R: BufRead>(reader: R, shape: (usize, usize, usize)) -> Result<ImageSet> {
    let n_pix = shape.0 * shape.1 * shape.2;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_pix + 1 {
            return Err(Error::format(format!(
                "line {}: expected {} fields, found {}",
                lineno + 1,
                n_pix + 1,
                fields.len()
            )));
        }
        for f in &fields[..n_pix] {
            let v: f32 = f
                .trim()
                .parse()
                .map_err(|_| Error::format(format!("line {}: bad pixel `{f}`", lineno + 1)))?;
            if !(0.0..=255.0).contains(&v) {
                return Err(Error::format(format!("line {}: pixel {v} outside 0..=255", lineno + 1)));
            }
            pixels.push(v / 255.0);
        }
        let label: f64 = fields[n_pix]
            .trim()
            .parse()
            .map_err(|_| Error::format(format!("line {}: bad label", lineno + 1)))?;
        if label < 0.0 || label.fract() != 0.0 || label > 1e6 {
            return Err(Error::format(format!("line {}: label {label} is not a class id", lineno + 1)));
        }
        labels.push(label as usize);
    }
    let n = labels.len();
    ImageSet::new(Array4::from_shape_vec((n, shape.0, shape.1, shape.2), pixels).unwrap(), labels)
}

pub fn load_pixel_csv(path: &Path, shape: (usize, usize, usize)) -> Result<ImageSet> {
    parse_pixel_csv(BufReader::new(open_maybe_gz(path)?), shape)
}

/// Splits a set into train/test by taking the last `test_fraction` of each
/// class (in file order) as test samples.
pub fn split_per_class(set: &ImageSet, num_classes: usize, test_fraction: f64) -> (ImageSet, ImageSet) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..num_classes {
        let idx = set.indices_of_class(c);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        let cut = idx.len() - n_test;
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (set.select(&train), set.select(&test))
}

/// Loads an image file, resizes it to `H×W` and returns `C×H×W` in `[0, 1]`
/// (`C` = 3 for RGB, 1 for luminance).
pub fn load_image(path: &Path, shape: (usize, usize, usize)) -> Result<Array3<f32>> {
    let img = image::open(path).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let (c, h, w) = shape;
    let img = img.resize_exact(w as u32, h as u32, image::imageops::FilterType::Triangle);
    match c {
        1 => {
            let g = img.to_luma8();
            Ok(Array3::from_shape_fn((1, h, w), |(_, y, x)| g.get_pixel(x as u32, y as u32)[0] as f32 / 255.0))
        }
        3 => {
            let rgb = img.to_rgb8();
            Ok(Array3::from_shape_fn((3, h, w), |(ch, y, x)| rgb.get_pixel(x as u32, y as u32)[ch] as f32 / 255.0))
        }
        _ => Err(Error::config(format!("unsupported channel count {c}"))),
    }
}

/// Writes a `C×H×W` image in `[0, 1]` as PNG (C = 1 or 3).
pub fn save_image(path: &Path, image: &Array3<f32>) -> Result<()> {
    let (c, h, w) = image.dim();
    let px = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let result = match c {
        1 => image::GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([px(image[[0, y as usize, x as usize]])]))
            .save(path),
        3 => image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
            image::Rgb([0, 1, 2].map(|ch| px(image[[ch, y as usize, x as usize]])))
        })
        .save(path),
        _ => return Err(Error::config(format!("cannot save {c}-channel image"))),
    };
    result.map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Class-conditional synthetic images: each class owns a smooth random
/// prototype; samples add Gaussian pixel noise and a random brightness
/// shift, then clip to `[0, 1]`.
pub fn synthetic_blobs(
    num_classes: usize,
    train_per_class: usize,
    test_per_class: usize,
    shape: (usize, usize, usize),
    noise: f64,
    seed: u64,
) -> LabeledDataset {
    let (c, h, w) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protos: Vec<Array3<f32>> = (0..num_classes)
        .map(|_| {
            let coarse = (h / 4).max(2);
            let coarse_w = (w / 4).max(2);
            let mut planes = Array3::<f32>::zeros((c, h, w));
            for ch in 0..c {
                let small = Array2::from_shape_fn((coarse, coarse_w), |_| rng.random::<f32>());
                planes.index_axis_mut(ndarray::Axis(0), ch).assign(&resize_bilinear(&small, h, w));
            }
            planes
        })
        .collect();
    let normal = Normal::new(0.0, noise.max(1e-12)).unwrap();
    let mut make = |per_class: usize| {
        let n = per_class * num_classes;
        let mut images = Array4::<f32>::zeros((n, c, h, w));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % num_classes;
            let shift = rng.random_range(-0.1f32..0.1);
            let mut img = images.index_axis_mut(ndarray::Axis(0), i);
            img.assign(&protos[class]);
            img.mapv_inplace(|v| (v + shift + normal.sample(&mut rng) as f32).clamp(0.0, 1.0));
            labels.push(class);
        }
        ImageSet { images, labels }
    };
    let train = make(train_per_class);
    let test = make(test_per_class);
    LabeledDataset { name: "synthetic".into(), train, test, num_classes }
}
