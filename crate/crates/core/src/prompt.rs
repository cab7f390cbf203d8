//! Point and box prompts for a promptable segmenter.
//!
//! Positives are drawn uniformly without replacement from the foreground,
//! negatives from the background pixels inside the tight bounding box.
//! Points are `(x = col, y = row)`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::mask::{Bbox, BinaryMask};

pub const NUM_POSITIVE: usize = 10;
pub const NUM_NEGATIVE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    /// `None` for an empty mask.
    pub bbox: Option<Bbox>,
    pub positive: Vec<Point>,
    pub negative: Vec<Point>,
    pub seed: u64,
}

impl PromptSet {
    /// Point labels in `positive ++ negative` order: 1 for positive, 0 for negative.
    pub fn labels(&self) -> Vec<u8> {
        std::iter::repeat_n(1, self.positive.len())
            .chain(std::iter::repeat_n(0, self.negative.len()))
            .collect()
    }
}

fn draw(rng: &mut ChaCha8Rng, population: &[Point], amount: usize) -> Vec<Point> {
    let amount = amount.min(population.len());
    index::sample(rng, population.len(), amount)
        .into_iter()
        .map(|i| population[i])
        .collect()
}

pub fn sample_prompts(mask: &BinaryMask, seed: u64) -> PromptSet {
    sample_prompts_with(mask, seed, NUM_POSITIVE, NUM_NEGATIVE)
}

pub fn sample_prompts_with(
    mask: &BinaryMask,
    seed: u64,
    num_positive: usize,
    num_negative: usize,
) -> PromptSet {
    let Some(bbox) = mask.bbox() else {
        return PromptSet {
            bbox: None,
            positive: Vec::new(),
            negative: Vec::new(),
            seed,
        };
    };
    let foreground: Vec<Point> = mask.foreground().map(|(y, x)| Point { x, y }).collect();
    let background: Vec<Point> = (bbox.y_min..=bbox.y_max)
        .flat_map(|y| (bbox.x_min..=bbox.x_max).map(move |x| Point { x, y }))
        .filter(|p| !mask.get(p.y, p.x))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positive = draw(&mut rng, &foreground, num_positive);
    let negative = draw(&mut rng, &background, num_negative);
    PromptSet {
        bbox: Some(bbox),
        positive,
        negative,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn exactly_ten_foreground_pixels() {
        let m = BinaryMask::from_fn(6, 6, |r, c| r < 2 && c < 5).unwrap();
        let p = sample_prompts(&m, 3);
        let got: BTreeSet<_> = p.positive.iter().copied().collect();
        let all: BTreeSet<_> = m.foreground().map(|(y, x)| Point { x, y }).collect();
        assert_eq!(got, all);
        assert_eq!(p.positive.len(), 10);
        assert_eq!(p, sample_prompts(&m, 3));
    }

    #[test]
    fn filled_box_has_no_negatives() {
        let m =
            BinaryMask::from_fn(8, 8, |r, c| (2..6).contains(&r) && (1..4).contains(&c)).unwrap();
        let p = sample_prompts(&m, 0);
        assert!(p.negative.is_empty());
        assert_eq!(p.positive.len(), 10);
        assert_eq!(p.labels(), vec![1; 10]);
    }

    #[test]
    fn empty_mask() {
        let p = sample_prompts(&BinaryMask::new(4, 4).unwrap(), 9);
        assert_eq!(p.bbox, None);
        assert!(p.positive.is_empty() && p.negative.is_empty());
    }

    #[test]
    fn blob_seed_42() {
        let m = BinaryMask::from_fn(20, 20, |r, c| {
            let (dr, dc) = (r as i64 - 10, c as i64 - 9);
            dr * dr + dc * dc <= 36
        })
        .unwrap();
        let p = sample_prompts(&m, 42);
        let b = p.bbox.unwrap();
        assert_eq!(p.positive.len(), 10);
        assert_eq!(p.negative.len(), 5);
        assert!(p.positive.iter().all(|q| m.get(q.y, q.x)));
        assert!(p
            .negative
            .iter()
            .all(|q| !m.get(q.y, q.x) && b.contains(q.x, q.y)));
        assert_eq!(p, sample_prompts(&m, 42));
        assert_ne!(p.positive, sample_prompts(&m, 43).positive);
    }

    proptest! {
        #[test]
        fn sampler_laws(h in 1usize..16, w in 1usize..16, bits in proptest::collection::vec(proptest::bool::weighted(0.3), 256), seed in any::<u64>()) {
            let m = BinaryMask::from_fn(h, w, |r, c| bits[r * 16 + c]).unwrap();
            let p = sample_prompts(&m, seed);
            let area = m.count() as usize;
            prop_assert_eq!(p.positive.len(), area.min(10));
            let neg_pop = p.bbox.map_or(0, |b| b.area() as usize - area);
            prop_assert_eq!(p.negative.len(), neg_pop.min(5));
            prop_assert_eq!(p.positive.iter().collect::<BTreeSet<_>>().len(), p.positive.len());
            prop_assert_eq!(p.negative.iter().collect::<BTreeSet<_>>().len(), p.negative.len());
            prop_assert!(p.positive.iter().all(|q| m.get(q.y, q.x)));
            if let Some(b) = p.bbox {
                prop_assert!(p.negative.iter().all(|q| !m.get(q.y, q.x) && b.contains(q.x, q.y)));
            }
        }
    }
}
