//! Fixed-capacity episodic memory filled by reservoir sampling
//! (Algorithm R): after `N ≥ capacity` offers every item is retained with
//! probability `capacity / N`, independent of arrival order.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{read_blob, write_blob};
use crate::error::{Error, Result};

/// One stored exemplar: the un-augmented image, its label, and an optional
/// payload (stored logits for logit-replay methods).
#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub image: Array3<f32>,
    pub label: usize,
    pub aux: Option<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub struct ReservoirBuffer<T> {
    capacity: usize,
    seen: u64,
    entries: Vec<T>,
    rng: ChaCha8Rng,
}

impl<T> ReservoirBuffer<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self { capacity, seen: 0, entries: Vec::with_capacity(capacity.min(1 << 16)), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    /// Offers one item. Returns the slot it was written to, if any.
    pub fn insert(&mut self, entry: T) -> Option<usize> {
        let slot = if (self.seen as usize) < self.capacity {
            0
        } else {
            self.rng.random_range(0..=self.seen) as usize
        };
        self.place(entry, slot)
    }

    /// Offers one item using a caller-supplied uniform draw `u ∈ [0, 1)`
    /// in place of the internal generator: the candidate slot is
    /// `⌊u·(seen+1)⌋`.
    pub fn insert_with_draw(&mut self, entry: T, u: f64) -> Option<usize> {
        let u = u.clamp(0.0, 1.0 - f64::EPSILON);
        let slot = (u * (self.seen as f64 + 1.0)).floor() as usize;
        self.place(entry, slot)
    }

    fn place(&mut self, entry: T, slot: usize) -> Option<usize> {
        let written = if self.entries.len() < self.capacity {
            self.entries.push(entry);
            Some(self.entries.len() - 1)
        } else if slot < self.capacity {
            self.entries[slot] = entry;
            Some(slot)
        } else {
            None
        };
        self.seen += 1;
        written
    }

    /// Indices of `n` entries drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..n).map(|_| rng.random_range(0..self.entries.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&T>> {
        Ok(self.sample_indices(n, rng)?.into_iter().map(|i| &self.entries[i]).collect())
    }

    pub fn entry_mut(&mut self, index: usize) -> Option<&mut T> {
        self.entries.get_mut(index)
    }
}

const MAGIC: &[u8; 8] = b"DUCABUF\0";

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotHeader {
    capacity: usize,
    seen: u64,
    rng_seed: String,
    rng_stream: u64,
    rng_word_pos: String,
    image_shape: (usize, usize, usize),
    labels: Vec<usize>,
    aux_lens: Vec<Option<usize>>,
}

impl ReservoirBuffer<BufferEntry> {
    /// Binary snapshot including the reservoir generator position, so a
    /// restored buffer continues the exact same insertion sequence.
    pub fn encode(&self) -> Vec<u8> {
        let image_shape = self.entries.first().map(|e| e.image.dim()).unwrap_or((0, 0, 0));
        let header = SnapshotHeader {
            capacity: self.capacity,
            seen: self.seen,
            rng_seed: hex::encode(self.rng.get_seed()),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
            image_shape,
            labels: self.entries.iter().map(|e| e.label).collect(),
            aux_lens: self.entries.iter().map(|e| e.aux.as_ref().map(Vec::len)).collect(),
        };
        let mut payload = Vec::new();
        for e in &self.entries {
            for v in e.image.iter() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            for v in e.aux.iter().flatten() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        write_blob(MAGIC, &header, &payload)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (SnapshotHeader, &[u8]) = read_blob(MAGIC, bytes)?;
        let n = h.labels.len();
        if h.aux_lens.len() != n {
            return Err(Error::format("label and aux tables differ in length"));
        }
        let expected_len = (h.seen.min(h.capacity as u64)) as usize;
        if n != expected_len {
            return Err(Error::format(format!(
                "snapshot holds {n} entries, expected min(seen, capacity) = {expected_len}"
            )));
        }
        let (c, hh, w) = h.image_shape;
        let img_len = c
            .checked_mul(hh)
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| Error::format("image shape overflows"))?;
        if n > 0 && img_len == 0 {
            return Err(Error::format("empty image shape"));
        }
        let total = h
            .aux_lens
            .iter()
            .try_fold(0usize, |acc, a| acc.checked_add(img_len)?.checked_add(a.unwrap_or(0)))
            .ok_or_else(|| Error::format("payload size overflows"))?;
        if total.checked_mul(4) != Some(payload.len()) {
            return Err(Error::format("payload length does not match header"));
        }
        let seed: [u8; 32] = hex::decode(&h.rng_seed)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| Error::format("bad generator seed"))?;
        let word_pos: u128 = h.rng_word_pos.parse().map_err(|_| Error::format("bad generator position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(h.rng_stream);
        rng.set_word_pos(word_pos);

        let mut values = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()));
        let mut entries = Vec::with_capacity(n);
        for (&label, aux_len) in h.labels.iter().zip(&h.aux_lens) {
            let image: Vec<f32> = values.by_ref().take(img_len).collect();
            let image = Array3::from_shape_vec((c, hh, w), image).expect("length checked");
            let aux = aux_len.map(|k| values.by_ref().take(k).collect());
            entries.push(BufferEntry { image, label, aux });
        }
        Ok(Self { capacity: h.capacity, seen: h.seen, entries, rng })
    }
}
