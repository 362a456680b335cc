//! Ground-truth beam labels from sweep measurements: argmax labels, the
//! 64-to-32 power downsampling, and top-k beam extraction.
//!
//! All tie-breaking is deterministic: among equal powers the lowest beam
//! index wins, so labels are reproducible bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

/// Per-beam average received power from one sweep.
///
/// `codebook_id` ties the vector back to the codebook it was measured with
/// ([`crate::codebook::BeamCodebook::id`]); 0 marks vectors of unattributed
/// origin, e.g. loaded from external measurement files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector<T> {
    values: Vec<T>,
    codebook_id: u64,
}

impl<T: Real> PowerVector<T> {
    pub fn new(values: Vec<T>, codebook_id: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("power vector must not be empty"));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < T::zero() {
                return Err(Error::data(format!(
                    "power entry {i} is {v}; entries must be finite and non-negative"
                )));
            }
        }
        Ok(PowerVector {
            values,
            codebook_id,
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn codebook_id(&self) -> u64 {
        self.codebook_id
    }

    /// Re-tag the vector with the codebook it now corresponds to, e.g. after
    /// downsampling to a sparser grid.
    pub fn with_codebook_id(mut self, codebook_id: u64) -> Self {
        self.codebook_id = codebook_id;
        self
    }
}

/// A beam index together with the codebook size it indexes into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BeamLabel {
    index: usize,
    codebook_size: usize,
}

impl BeamLabel {
    pub fn new(index: usize, codebook_size: usize) -> Result<Self> {
        if index >= codebook_size {
            return Err(Error::data(format!(
                "beam index {index} out of range for a {codebook_size}-beam codebook"
            )));
        }
        Ok(BeamLabel {
            index,
            codebook_size,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook_size
    }
}

/// Ground-truth optimal beam: lowest index attaining the maximum power.
pub fn optimal_beam<T: Real>(pv: &PowerVector<T>) -> BeamLabel {
    BeamLabel {
        index: argmax(pv.values()),
        codebook_size: pv.len(),
    }
}

/// Keep every `factor`-th entry starting at index 0, i.e. the powers of the
/// [`crate::codebook::BeamCodebook::keep_every`] sub-codebook. The caller
/// re-tags the result with that codebook's id via
/// [`PowerVector::with_codebook_id`].
pub fn downsample_power<T: Real>(pv: &PowerVector<T>, factor: usize) -> Result<PowerVector<T>> {
    if factor == 0 || pv.len() % factor != 0 {
        return Err(Error::config(format!(
            "cannot keep every {factor}-th of {} entries",
            pv.len()
        )));
    }
    let values = pv.values().iter().step_by(factor).copied().collect();
    PowerVector::new(values, pv.codebook_id())
}

/// The `k` highest-power beams in non-increasing power order; among equal
/// powers the lower index comes first.
pub fn topk_beams<T: Real>(pv: &PowerVector<T>, k: usize) -> Result<Vec<BeamLabel>> {
    let q = pv.len();
    Ok(top_k_indices(pv.values(), k)?
        .into_iter()
        .map(|index| BeamLabel {
            index,
            codebook_size: q,
        })
        .collect())
}

/// First index achieving the maximum of a non-empty slice.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Indices of the `k` largest values, in descending value order; among equal
/// values the lower index comes first.
pub fn top_k_indices<T: Real>(values: &[T], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > values.len() {
        return Err(Error::config(format!(
            "k = {k} outside 1..={}",
            values.len()
        )));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{los_channel, received_power_vector, LinkGeometry, NoiseModel};
    use crate::codebook::{build_codebook, ArrayGeometry};
    use crate::geom::Vec3;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pv(values: &[f64]) -> PowerVector<f64> {
        PowerVector::new(values.to_vec(), 0).unwrap()
    }

    #[test]
    fn unique_max_wins() {
        let label = optimal_beam(&pv(&[0.0, 0.0, 5.0, 0.0]));
        assert_eq!(label.index(), 2);
        assert_eq!(label.codebook_size(), 4);
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        assert_eq!(optimal_beam(&pv(&[3.0, 3.0, 1.0])).index(), 0);
        assert_eq!(optimal_beam(&pv(&[0.1, 0.9, 0.9, 0.2])).index(), 1);
        assert_eq!(optimal_beam(&pv(&[5.0])).index(), 0);
    }

    #[test]
    fn label_for_off_grid_sine_matches_frozen_arithmetic() {
        // sine 0.40 against the default 64-beam grid:
        // round((0.40 + 0.866) / (1.732/63)) = 46, frozen and re-derived here
        // by brute-force sweep.
        let array = ArrayGeometry::<f64>::default_16();
        let cb = build_codebook(&array, 64, 0.866).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // x/r = 0.40 with r = 50.
        let pos = Vec3::from_f64(20.0, 30.0, (2500.0_f64 - 400.0 - 900.0).sqrt());
        let link = LinkGeometry::new(Vec3::zero(), pos).unwrap();
        let ch = los_channel(&link, &array, &mut rng).unwrap();
        assert!((ch.steering_sine() - 0.40).abs() < 1e-12);
        let p = received_power_vector(&ch, &cb, &NoiseModel::noiseless(), &mut rng).unwrap();
        assert_eq!(optimal_beam(&p).index(), 46);
        assert_eq!(cb.nearest_beam(0.40), 46);
    }

    #[test]
    fn beam_label_validates_range() {
        assert!(BeamLabel::new(31, 32).is_ok());
        assert!(BeamLabel::new(32, 32).is_err());
    }

    #[test]
    fn power_vector_rejects_bad_entries() {
        assert!(PowerVector::<f64>::new(vec![], 0).is_err());
        assert!(PowerVector::new(vec![1.0, -0.5], 0).is_err());
        assert!(PowerVector::new(vec![1.0, f64::NAN], 0).is_err());
        assert!(PowerVector::new(vec![0.0, 0.0], 0).is_ok());
    }

    #[test]
    fn downsample_keeps_even_indices() {
        assert_eq!(
            downsample_power(&pv(&[1.0, 2.0, 3.0, 4.0]), 2)
                .unwrap()
                .values(),
            &[1.0, 3.0]
        );
        let p = PowerVector::new((0..64).map(f64::from).collect(), 9).unwrap();
        let half = downsample_power(&p, 2).unwrap();
        assert_eq!(half.len(), 32);
        let evens: Vec<f64> = (0..32).map(|i| (2 * i) as f64).collect();
        assert_eq!(half.values(), &evens[..]);
        assert_eq!(half.codebook_id(), 9);
        assert_eq!(half.clone().with_codebook_id(7).codebook_id(), 7);
        assert!(downsample_power(&p, 3).is_err());
        assert!(downsample_power(&p, 0).is_err());
        assert_eq!(downsample_power(&p, 1).unwrap().values(), p.values());
    }

    #[test]
    fn downsampled_label_keeps_the_steering_sine_on_even_grid() {
        // Geometries whose nearest full-grid beam has an even index: the
        // 32-beam label points at the same steering sine as the 64-beam one.
        let array = ArrayGeometry::<f64>::default_16();
        let cb = build_codebook(&array, 64, 0.866).unwrap();
        let half_cb = cb.keep_every(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let step = 2.0 * 0.866 / 63.0;
        for _ in 0..100 {
            let q = 2 * rng.gen_range(0..32usize);
            let s = cb.beam(q).steering_sine() + rng.gen_range(-0.35..0.35) * step;
            let c = (1.0 - s * s).sqrt();
            let pos = Vec3::from_f64(s, 0.3 * c, c * (1.0 - 0.09_f64).sqrt()) * 20.0;
            let link = LinkGeometry::new(Vec3::zero(), pos).unwrap();
            let ch = los_channel(&link, &array, &mut rng).unwrap();
            let p = received_power_vector(&ch, &cb, &NoiseModel::noiseless(), &mut rng).unwrap();
            let full = optimal_beam(&p);
            assert_eq!(full.index(), q);
            let down = downsample_power(&p, 2)
                .unwrap()
                .with_codebook_id(half_cb.id());
            let half = optimal_beam(&down);
            assert_eq!(
                half_cb.beam(half.index()).steering_sine(),
                cb.beam(full.index()).steering_sine()
            );
        }
    }

    #[test]
    fn topk_orders_by_power_then_index() {
        let labels = topk_beams(&pv(&[5.0, 1.0, 9.0]), 2).unwrap();
        let indices: Vec<usize> = labels.iter().map(|l| l.index()).collect();
        assert_eq!(indices, vec![2, 0]);
        assert!(labels.iter().all(|l| l.codebook_size() == 3));

        let tied = topk_beams(&pv(&[7.0, 7.0, 7.0]), 3).unwrap();
        let indices: Vec<usize> = tied.iter().map(|l| l.index()).collect();
        assert_eq!(indices, vec![0, 1, 2]);

        assert_eq!(top_k_indices(&[0.1, 0.4, 0.2, 0.4], 2).unwrap(), vec![1, 3]);
        assert!(top_k_indices(&[0.1, 0.4], 0).is_err());
        assert!(top_k_indices(&[0.1, 0.4], 3).is_err());
    }

    #[test]
    fn full_topk_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let values: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..10.0)).collect();
        let p = PowerVector::new(values, 0).unwrap();
        let all = topk_beams(&p, 64).unwrap();
        let mut seen: Vec<usize> = all.iter().map(|l| l.index()).collect();
        seen.sort_unstable();
        let expected: Vec<usize> = (0..64).collect();
        assert_eq!(seen, expected);
    }

    proptest! {
        #[test]
        fn topk_first_entry_is_optimal_beam(
            values in prop::collection::vec(0.0f64..100.0, 1..64)
        ) {
            let p = PowerVector::new(values, 0).unwrap();
            prop_assert_eq!(topk_beams(&p, 1).unwrap()[0], optimal_beam(&p));
        }

        #[test]
        fn topk_lists_are_prefix_consistent(
            values in prop::collection::vec(0.0f64..100.0, 2..40)
        ) {
            let p = PowerVector::new(values.clone(), 0).unwrap();
            let full = topk_beams(&p, values.len()).unwrap();
            for k in 1..values.len() {
                let partial = topk_beams(&p, k).unwrap();
                prop_assert_eq!(&partial[..], &full[..k]);
            }
            for w in full.windows(2) {
                prop_assert!(values[w[0].index()] >= values[w[1].index()]);
            }
        }

        #[test]
        fn downsample_then_argmax_matches_even_subset(
            values in prop::collection::vec(0.0f64..10.0, 1..32)
        ) {
            let doubled: Vec<f64> = values.iter()
                .flat_map(|v| [*v, v * 0.5 + 0.1])
                .collect();
            let p = PowerVector::new(doubled.clone(), 0).unwrap();
            let down = downsample_power(&p, 2).unwrap();
            prop_assert_eq!(down.len(), values.len());
            for (i, v) in down.values().iter().enumerate() {
                prop_assert_eq!(*v, doubled[2 * i]);
            }
            let brute = (0..values.len())
                .max_by(|&a, &b| {
                    doubled[2 * a].partial_cmp(&doubled[2 * b]).unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap();
            prop_assert_eq!(optimal_beam(&down).index(), brute);
        }

        #[test]
        fn label_is_argmax(values in prop::collection::vec(0.0f64..10.0, 1..64)) {
            let p = PowerVector::new(values.clone(), 0).unwrap();
            let label = optimal_beam(&p).index();
            for v in &values {
                prop_assert!(*v <= values[label]);
            }
            for v in &values[..label] {
                prop_assert!(*v < values[label]);
            }
        }
    }
}
