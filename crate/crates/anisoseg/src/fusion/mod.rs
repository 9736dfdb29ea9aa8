//! Multi-planar mask fusion and post-processing.
//!
//! Per-orientation masks are fused by averaging their linearly resampled
//! signed distance fields and thresholding the average at zero.

mod components;
mod edt;

pub use components::{label_components, largest_component, ComponentLabeling, Connectivity};
pub use edt::{signed_edt, DistanceField};

use crate::error::{Error, Result};
use crate::volume::{resample_linear, Grid3, Mask};

/// Fuses masks living on their own grids into one mask on `target`.
///
/// Pipeline per mask: signed EDT -> linear resample to `target` -> average
/// across masks -> foreground where the average is < 0 (exactly 0 stays
/// background).
pub fn fuse_planes(masks: &[Mask], target: &Grid3) -> Result<Mask> {
    if masks.is_empty() {
        return Err(Error::EmptyInput("fuse_planes needs >= 1 mask".into()));
    }
    target.validate()?;
    let mut acc = vec![0.0f64; target.len()];
    for m in masks {
        let field = signed_edt(m)?;
        let resampled = resample_linear(&field.to_volume(), target)?;
        for (a, v) in acc.iter_mut().zip(&resampled.samples) {
            *a += v;
        }
    }
    let inv = 1.0 / masks.len() as f64;
    let labels = acc.iter().map(|&s| ((s * inv) < 0.0) as u8).collect();
    Mask::new(*target, labels)
}

/// Per-voxel majority vote over an odd number of masks on one grid.
pub fn majority_vote(masks: &[Mask]) -> Result<Mask> {
    if masks.is_empty() {
        return Err(Error::EmptyInput("majority_vote needs >= 1 mask".into()));
    }
    if masks.len() % 2 == 0 {
        return Err(Error::EvenVoteCount(masks.len()));
    }
    let grid = masks[0].grid;
    for m in &masks[1..] {
        if m.grid != grid {
            return Err(Error::GridMismatch("majority_vote masks must share one grid".into()));
        }
    }
    let half = masks.len() / 2;
    let labels = (0..grid.len())
        .map(|i| {
            let votes = masks.iter().filter(|m| m.labels[i] == 1).count();
            (votes > half) as u8
        })
        .collect();
    Mask::new(grid, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Mask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn box_mask(g: Grid3, lo: [usize; 3], hi: [usize; 3]) -> Mask {
        let mut labels = vec![0u8; g.len()];
        for z in lo[2]..hi[2] {
            for y in lo[1]..hi[1] {
                for x in lo[0]..hi[0] {
                    labels[g.index(x, y, z)] = 1;
                }
            }
        }
        Mask::new(g, labels).unwrap()
    }

    #[test]
    fn identical_masks_fuse_to_themselves() {
        let g = Grid3::isotropic([10, 10, 10], 1.0).unwrap();
        let m = box_mask(g, [2, 2, 2], [7, 8, 6]);
        let fused = fuse_planes(&[m.clone(), m.clone(), m.clone()], &g).unwrap();
        assert_eq!(fused, m);
    }

    #[test]
    fn single_mask_fuses_to_threshold_of_its_own_field() {
        // source on a coarse grid, fused onto a finer target
        let src = Grid3::new([6, 6, 3], [1.0, 1.0, 2.0], [0.5, 0.5, 1.0]).unwrap();
        let m = box_mask(src, [1, 1, 0], [5, 5, 2]);
        let target = Grid3::isotropic([12, 12, 12], 0.5).unwrap();
        let fused = fuse_planes(&[m.clone()], &target).unwrap();
        let field = signed_edt(&m).unwrap();
        let resampled = resample_linear(&field.to_volume(), &target).unwrap();
        let expect: Vec<u8> = resampled.samples.iter().map(|&v| (v < 0.0) as u8).collect();
        assert_eq!(fused.labels, expect);
    }

    #[test]
    fn offset_boxes_match_composed_brute_force_oracle() {
        let g = Grid3::isotropic([16, 16, 16], 1.0).unwrap();
        let a = box_mask(g, [2, 2, 2], [9, 9, 9]);
        let b = box_mask(g, [4, 4, 4], [11, 11, 11]);
        let target = Grid3::isotropic([16, 16, 16], 1.0).unwrap();
        let fused = fuse_planes(&[a.clone(), b.clone()], &target).unwrap();

        // oracle route: brute-force EDT, brute-force interpolation (identity
        // grid -> direct lookup), explicit average, threshold
        let fa = crate::reference::edt_brute_force(&a);
        let fb = crate::reference::edt_brute_force(&b);
        let expect: Vec<u8> = (0..g.len())
            .map(|i| (((fa[i] + fb[i]) / 2.0) < 0.0) as u8)
            .collect();
        assert_eq!(fused.labels, expect);
    }

    #[test]
    fn fusion_is_permutation_invariant() {
        let g = Grid3::isotropic([12, 12, 12], 1.0).unwrap();
        let a = box_mask(g, [1, 1, 1], [6, 7, 8]);
        let b = box_mask(g, [3, 2, 4], [10, 9, 9]);
        let c = box_mask(g, [2, 5, 2], [8, 11, 7]);
        let t = Grid3::isotropic([18, 18, 18], 0.7).unwrap();
        let f1 = fuse_planes(&[a.clone(), b.clone(), c.clone()], &t).unwrap();
        let f2 = fuse_planes(&[c, a, b], &t).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn empty_input_errors() {
        let g = Grid3::isotropic([4, 4, 4], 1.0).unwrap();
        assert!(fuse_planes(&[], &g).is_err());
    }

    #[test]
    fn exact_zero_average_is_background() {
        // two single-voxel masks whose fields cancel nowhere relevant; build
        // the degenerate case directly instead: average field of a mask and
        // its complement is exactly 0 at symmetric voxels on a 2-voxel grid
        let g = Grid3::new([2, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let m1 = Mask::new(g, vec![1, 0]).unwrap();
        let m2 = Mask::new(g, vec![0, 1]).unwrap();
        // field(m1) = [-1, +1], field(m2) = [+1, -1]; average = [0, 0]
        let fused = fuse_planes(&[m1, m2], &g).unwrap();
        assert_eq!(fused.labels, vec![0, 0]);
    }

    #[test]
    fn majority_vote_examples() {
        let g = Grid3::isotropic([8, 8, 8], 1.0).unwrap();
        let m = box_mask(g, [1, 1, 1], [5, 5, 5]);
        // identical masks -> same mask
        let out = majority_vote(&[m.clone(), m.clone(), m.clone()]).unwrap();
        assert_eq!(out, m);
        // majority_vote(m, m, anything) = m
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let noise = Mask::new(g, (0..g.len()).map(|_| rng.gen_range(0..=1)).collect()).unwrap();
        let out = majority_vote(&[m.clone(), noise, m.clone()]).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn majority_vote_matches_counting_oracle() {
        let g = Grid3::isotropic([8, 8, 8], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let masks: Vec<Mask> = (0..3)
            .map(|_| {
                Mask::new(g, (0..g.len()).map(|_| rng.gen_range(0..=1)).collect()).unwrap()
            })
            .collect();
        let out = majority_vote(&masks).unwrap();
        for i in 0..g.len() {
            let ones: u8 = masks.iter().map(|m| m.labels[i]).sum();
            assert_eq!(out.labels[i], (ones >= 2) as u8);
        }
    }

    #[test]
    fn even_vote_count_errors() {
        let g = Grid3::isotropic([2, 2, 2], 1.0).unwrap();
        let m = Mask::filled(g, 1).unwrap();
        assert!(matches!(
            majority_vote(&[m.clone(), m.clone()]),
            Err(Error::EvenVoteCount(2))
        ));
    }

    #[test]
    fn vote_on_mismatched_grids_errors() {
        let g1 = Grid3::isotropic([2, 2, 2], 1.0).unwrap();
        let g2 = Grid3::isotropic([2, 2, 2], 2.0).unwrap();
        let a = Mask::filled(g1, 1).unwrap();
        let b = Mask::filled(g2, 1).unwrap();
        assert!(majority_vote(&[a.clone(), b, a]).is_err());
    }

    #[test]
    fn fused_anisotropic_planes_recover_a_shared_shape() {
        // one "true" box rendered on three anisotropic grids over the same
        // 8mm cube extent; fusion on the fine grid recovers the box closely
        let fine = Grid3::isotropic([16, 16, 16], 0.5).unwrap();
        let truth = box_mask(fine, [4, 4, 4], [12, 12, 12]);

        let axial = Grid3::new([16, 16, 4], [0.5, 0.5, 2.0], [0.25, 0.25, 1.0]).unwrap();
        let sagittal = Grid3::new([4, 16, 16], [2.0, 0.5, 0.5], [1.0, 0.25, 0.25]).unwrap();
        let coronal = Grid3::new([16, 4, 16], [0.5, 2.0, 0.5], [0.25, 1.0, 0.25]).unwrap();
        let render = |g: &Grid3| {
            let mut labels = vec![0u8; g.len()];
            for z in 0..g.dims[2] {
                for y in 0..g.dims[1] {
                    for x in 0..g.dims[0] {
                        let p = g.world(x, y, z);
                        // true box spans [2mm, 6mm) per axis
                        if p.iter().all(|&c| (2.0..6.0).contains(&c)) {
                            labels[g.index(x, y, z)] = 1;
                        }
                    }
                }
            }
            Mask::new(*g, labels).unwrap()
        };
        let fused =
            fuse_planes(&[render(&axial), render(&sagittal), render(&coronal)], &fine).unwrap();
        // agreement with the true fine-grid box should be overwhelming
        let agree = fused
            .labels
            .iter()
            .zip(&truth.labels)
            .filter(|(a, b)| a == b)
            .count();
        assert!(agree as f64 / fine.len() as f64 > 0.95, "agreement {agree}");
    }
}
