//! Temporal voxel grid with bilinear weighting across bins.
//!
//! Each event's normalized time `t* = (B-1)(t - t_first)/(t_last - t_first)`
//! is split between bins `floor(t*)` and `floor(t*) + 1`. The split is
//! computed in exact integer arithmetic and quantized to multiples of 2^-32,
//! so the two weights sum to exactly 1 and every accumulation is exact in
//! `f64` (as long as a single voxel sees fewer than 2^21 events). The grid is
//! therefore independent of accumulation order and conserves signed mass
//! exactly.

use super::{EventStream, EvioError, Result};
use crate::imagery::{FloatTensor, ImageryError};

pub const DEFAULT_BINS: usize = 5;

const FRAC_BITS: u32 = 32;
const FRAC_ONE: u128 = 1 << FRAC_BITS;

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    bins: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
    pub t_start: u64,
    pub t_end: u64,
}

impl VoxelGrid {
    pub fn zeros(bins: usize, height: usize, width: usize) -> Self {
        Self { bins, height, width, data: vec![0.0; bins * height * width], t_start: 0, t_end: 0 }
    }

    pub fn from_data(bins: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageryError> {
        if data.len() != bins * height * width {
            return Err(ImageryError::ShapeMismatch { expected: vec![bins, height, width], got: vec![data.len()] });
        }
        Ok(Self { bins, height, width, data, t_start: 0, t_end: 0 })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, bin: usize, y: usize, x: usize) -> f64 {
        self.data[(bin * self.height + y) * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_tensor(&self) -> FloatTensor {
        FloatTensor::from_f64(vec![self.bins, self.height, self.width], &self.data).expect("rank-3 grid")
    }

    pub fn from_tensor(t: &FloatTensor) -> Result<Self, ImageryError> {
        match *t.dims() {
            [b, h, w] => Self::from_data(b, h, w, t.to_f64()),
            ref d => Err(ImageryError::ShapeMismatch { expected: vec![0, 0, 0], got: d.to_vec() }),
        }
    }
}

/// Normalized timestamps in `[0, B-1]`. A degenerate window (all events at
/// the same time, including a single event) maps every event to 0.
pub fn normalize_timestamps(stream: &EventStream, bins: usize) -> Vec<f64> {
    let ev = stream.events();
    let (Some(first), Some(last)) = (ev.first(), ev.last()) else {
        return Vec::new();
    };
    let span = last.t - first.t;
    if span == 0 {
        return vec![0.0; ev.len()];
    }
    let scale = bins.saturating_sub(1) as f64;
    ev.iter().map(|e| scale * (e.t - first.t) as f64 / span as f64).collect()
}

/// Lower bin index and upper-bin weight numerator (out of 2^32).
#[inline]
fn split(t: u64, t_start: u64, span: u64, bins: usize) -> (usize, u128) {
    if span == 0 {
        return (0, 0);
    }
    let num = (bins as u128 - 1) * (t - t_start) as u128;
    let span = span as u128;
    let lo = (num / span) as usize;
    let q = (((num % span) << FRAC_BITS) + span / 2) / span;
    if q == FRAC_ONE {
        (lo + 1, 0)
    } else {
        (lo, q)
    }
}

pub fn voxelize(stream: &EventStream, bins: usize) -> Result<VoxelGrid> {
    if bins == 0 {
        return Err(EvioError::BadBins);
    }
    let (h, w) = (stream.height() as usize, stream.width() as usize);
    let mut grid = VoxelGrid::zeros(bins, h, w);
    let ev = stream.events();
    let (Some(first), Some(last)) = (ev.first(), ev.last()) else {
        return Ok(grid);
    };
    grid.t_start = first.t;
    grid.t_end = last.t;
    let span = last.t - first.t;
    let unit = (-(FRAC_BITS as f64)).exp2();
    let plane = h * w;

    for e in ev {
        let pixel = e.y as usize * w + e.x as usize;
        let sign = e.p.sign() as f64;
        let (lo, q) = split(e.t, first.t, span, bins);
        grid.data[lo * plane + pixel] += sign * (FRAC_ONE - q) as f64 * unit;
        if q > 0 {
            grid.data[(lo + 1) * plane + pixel] += sign * q as f64 * unit;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evio::{Event, Polarity};
    use proptest::prelude::*;

    fn stream(ts: &[u64], ps: &[i8]) -> EventStream {
        let ev = ts
            .iter()
            .zip(ps)
            .map(|(&t, &p)| Event::new(t, 1, 2, Polarity::from_sign(p as i64).unwrap()))
            .collect();
        EventStream::new(4, 4, ev).unwrap()
    }

    /// Literal evaluation of the voxel definition: every (event, bin) pair.
    fn oracle(s: &EventStream, bins: usize) -> Vec<f64> {
        let tn = normalize_timestamps(s, bins);
        let (h, w) = (s.height() as usize, s.width() as usize);
        let mut out = vec![0.0; bins * h * w];
        for b in 0..bins {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for (e, &t) in s.events().iter().zip(&tn) {
                        let dx = (x == e.x as usize) as i32 as f64;
                        let dy = (y == e.y as usize) as i32 as f64;
                        acc += e.p.sign() as f64 * dx * dy * (1.0 - (b as f64 - t).abs()).max(0.0);
                    }
                    out[(b * h + y) * w + x] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn normalized_timestamps() {
        assert_eq!(normalize_timestamps(&stream(&[0, 50, 100], &[1, 1, 1]), 3), vec![0.0, 1.0, 2.0]);
        assert_eq!(normalize_timestamps(&stream(&[42], &[1]), 7), vec![0.0]);
        let t = normalize_timestamps(&stream(&[10, 20, 40], &[1, 1, 1]), 2);
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(t[2], 1.0);
    }

    #[test]
    fn events_on_bin_centres() {
        let g = voxelize(&stream(&[0, 100], &[1, -1]), 2).unwrap();
        assert_eq!(g.get(0, 2, 1), 1.0);
        assert_eq!(g.get(1, 2, 1), -1.0);
        assert_eq!(g.data().iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn empty_stream_gives_zero_grid() {
        let g = voxelize(&EventStream::empty(3, 2), 5).unwrap();
        assert_eq!(g.data().len(), 30);
        assert!(g.data().iter().all(|&v| v == 0.0));
        assert!(matches!(voxelize(&EventStream::empty(3, 2), 0), Err(EvioError::BadBins)));
    }

    #[test]
    fn middle_event_is_split_between_bins() {
        let s = stream(&[0, 30, 100], &[1, 1, 1]);
        let g = voxelize(&s, 3).unwrap();
        // t* = 0.6 for the middle event: 0.4 to bin 0, 0.6 to bin 1.
        assert!((g.get(0, 2, 1) - 1.4).abs() < 1e-9);
        assert!((g.get(1, 2, 1) - 0.6).abs() < 1e-9);
        assert_eq!(g.get(2, 2, 1), 1.0);
        for (a, b) in g.data().iter().zip(oracle(&s, 3)) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    fn arb_stream() -> impl Strategy<Value = (EventStream, usize)> {
        let ev = (0u64..5000, 0u16..16, 0u16..16, any::<bool>())
            .prop_map(|(t, x, y, p)| Event::new(t, x, y, if p { Polarity::Positive } else { Polarity::Negative }));
        (proptest::collection::vec(ev, 1..200), 1usize..=8)
            .prop_map(|(evs, b)| (EventStream::from_unsorted(16, 16, evs).unwrap(), b))
    }

    proptest! {
        #[test]
        fn matches_triple_loop_and_conserves_mass((s, bins) in arb_stream()) {
            let g = voxelize(&s, bins).unwrap();
            for (a, b) in g.data().iter().zip(oracle(&s, bins)) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
            prop_assert_eq!(g.sum(), s.polarity_sum() as f64);
            let nonzero_per_event_bound = s.len() * 2;
            prop_assert!(g.data().iter().filter(|&&v| v != 0.0).count() <= nonzero_per_event_bound);
        }

        #[test]
        fn same_timestamp_permutation_is_invisible((s, bins) in arb_stream(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut ev = s.events().to_vec();
            // Shuffle within runs of equal timestamps only.
            let mut start = 0;
            while start < ev.len() {
                let end = start + ev[start..].iter().take_while(|e| e.t == ev[start].t).count();
                ev[start..end].shuffle(&mut rng);
                start = end;
            }
            let shuffled = EventStream::new(16, 16, ev).unwrap();
            prop_assert_eq!(voxelize(&shuffled, bins).unwrap(), voxelize(&s, bins).unwrap());
        }
    }
}
