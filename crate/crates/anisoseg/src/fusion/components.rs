//! Connected-component labeling and largest-component post-processing.

use crate::volume::{Grid3, Mask};
use std::collections::VecDeque;

/// Neighborhood used for component analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    /// Neighbor index offsets (excluding the center).
    pub fn offsets(self) -> Vec<[i32; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1i32 {
            for dy in -1..=1i32 {
                for dx in -1..=1i32 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    if self == Connectivity::Six && dx.abs() + dy.abs() + dz.abs() != 1 {
                        continue;
                    }
                    out.push([dx, dy, dz]);
                }
            }
        }
        out
    }
}

/// Foreground partition into maximal connected components.
#[derive(Debug, Clone)]
pub struct ComponentLabeling {
    pub grid: Grid3,
    /// 0 = background; components numbered 1..=k in scan-discovery order,
    /// so component 1 has the smallest minimal linear index.
    pub labels: Vec<u32>,
    /// counts[c-1] = voxel count of component c; sums to the foreground size.
    pub counts: Vec<usize>,
}

/// BFS labeling of foreground components under `conn`.
pub fn label_components(m: &Mask, conn: Connectivity) -> ComponentLabeling {
    let g = m.grid;
    let offsets = conn.offsets();
    let mut labels = vec![0u32; g.len()];
    let mut counts = Vec::new();
    let mut queue = VecDeque::new();
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                let i = g.index(x, y, z);
                if m.labels[i] == 0 || labels[i] != 0 {
                    continue;
                }
                let id = counts.len() as u32 + 1;
                let mut count = 0usize;
                labels[i] = id;
                queue.push_back([x, y, z]);
                while let Some([cx, cy, cz]) = queue.pop_front() {
                    count += 1;
                    for off in &offsets {
                        let nx = cx as i32 + off[0];
                        let ny = cy as i32 + off[1];
                        let nz = cz as i32 + off[2];
                        if nx < 0
                            || ny < 0
                            || nz < 0
                            || nx as usize >= g.dims[0]
                            || ny as usize >= g.dims[1]
                            || nz as usize >= g.dims[2]
                        {
                            continue;
                        }
                        let j = g.index(nx as usize, ny as usize, nz as usize);
                        if m.labels[j] == 1 && labels[j] == 0 {
                            labels[j] = id;
                            queue.push_back([nx as usize, ny as usize, nz as usize]);
                        }
                    }
                }
                counts.push(count);
            }
        }
    }
    ComponentLabeling { grid: g, labels, counts }
}

/// Keeps only the largest component; size ties keep the component with the
/// smallest minimal linear index. An empty mask is returned unchanged.
pub fn largest_component(m: &Mask, conn: Connectivity) -> Mask {
    let labeling = label_components(m, conn);
    if labeling.counts.is_empty() {
        return m.clone();
    }
    // components are discovered in scan order, so the first maximum has the
    // smallest minimal linear index
    let mut best = 0usize;
    for (c, &count) in labeling.counts.iter().enumerate() {
        if count > labeling.counts[best] {
            best = c;
        }
    }
    let keep = best as u32 + 1;
    let labels = labeling.labels.iter().map(|&l| (l == keep) as u8).collect();
    Mask::new(m.grid, labels).expect("same grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from(coords: &[[usize; 3]], dims: [usize; 3]) -> Mask {
        let g = Grid3::isotropic(dims, 1.0).unwrap();
        let mut labels = vec![0u8; g.len()];
        for &[x, y, z] in coords {
            labels[g.index(x, y, z)] = 1;
        }
        Mask::new(g, labels).unwrap()
    }

    #[test]
    fn connectivity_offset_counts() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
    }

    #[test]
    fn single_blob_is_unchanged() {
        let m = mask_from(&[[1, 1, 1], [2, 1, 1], [2, 2, 1]], [4, 4, 4]);
        let out = largest_component(&m, Connectivity::TwentySix);
        assert_eq!(out, m);
    }

    #[test]
    fn smaller_blob_is_removed() {
        // 10-voxel bar and a separate 3-voxel bar
        let mut coords: Vec<[usize; 3]> = (0..10).map(|x| [x, 0, 0]).collect();
        coords.extend([[0, 5, 5], [1, 5, 5], [2, 5, 5]]);
        let m = mask_from(&coords, [12, 8, 8]);
        let out = largest_component(&m, Connectivity::TwentySix);
        assert_eq!(out.foreground_count(), 10);
        assert_eq!(out.at(0, 0, 0), 1);
        assert_eq!(out.at(0, 5, 5), 0);
    }

    #[test]
    fn size_tie_keeps_smallest_minimal_linear_index() {
        // two 2-voxel blobs; the one containing linear index 0 survives
        let m = mask_from(&[[0, 0, 0], [1, 0, 0], [5, 5, 5], [6, 5, 5]], [8, 8, 8]);
        let out = largest_component(&m, Connectivity::TwentySix);
        assert_eq!(out.at(0, 0, 0), 1);
        assert_eq!(out.at(1, 0, 0), 1);
        assert_eq!(out.at(5, 5, 5), 0);
    }

    #[test]
    fn empty_mask_is_returned_unchanged() {
        let m = mask_from(&[], [4, 4, 4]);
        let out = largest_component(&m, Connectivity::TwentySix);
        assert_eq!(out, m);
    }

    #[test]
    fn diagonal_voxels_connect_under_26_but_not_6() {
        let m = mask_from(&[[0, 0, 0], [1, 1, 1], [2, 2, 2]], [4, 4, 4]);
        let l26 = label_components(&m, Connectivity::TwentySix);
        assert_eq!(l26.counts, vec![3]);
        let l6 = label_components(&m, Connectivity::Six);
        assert_eq!(l6.counts, vec![1, 1, 1]);
    }

    #[test]
    fn counts_sum_to_foreground_size_and_output_is_one_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10 {
            let g = Grid3::isotropic([12, 12, 12], 1.0).unwrap();
            let labels: Vec<u8> = (0..g.len()).map(|_| rng.gen_bool(0.3) as u8).collect();
            let m = Mask::new(g, labels).unwrap();
            let lab = label_components(&m, Connectivity::TwentySix);
            assert_eq!(lab.counts.iter().sum::<usize>(), m.foreground_count());
            let out = largest_component(&m, Connectivity::TwentySix);
            if out.foreground_count() > 0 {
                let relab = label_components(&out, Connectivity::TwentySix);
                assert_eq!(relab.counts.len(), 1);
            }
        }
    }

    #[test]
    fn matches_union_find_oracle_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for conn in [Connectivity::Six, Connectivity::TwentySix] {
            for _ in 0..10 {
                let g = Grid3::isotropic([12, 12, 12], 1.0).unwrap();
                let labels: Vec<u8> =
                    (0..g.len()).map(|_| rng.gen_bool(0.25) as u8).collect();
                let m = Mask::new(g, labels).unwrap();
                let got = largest_component(&m, conn);
                let want = reference::largest_component_union_find(&m, &conn.offsets());
                assert_eq!(got, want);
            }
        }
    }
}
