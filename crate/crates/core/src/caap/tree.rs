//! Rebuilding decision trees from region sets, and iterated compaction.

use serde::{Deserialize, Serialize};

use super::{caap_pass, partitioning_of_tree, CaapError, DecisionTree, Index, Node, Partitioning, Region};
use crate::seeding;

/// Builds a tree whose leaves refine `regions`.
///
/// At every node the predicate minimises `S·(W+1) + |n_left − n_right|`,
/// where `W` is the number of regions at the node, `S` the number it
/// splits, and split regions count on both sides. Ties go to the lowest
/// dimension, then the lowest threshold. Regions cut by the chosen plane are
/// divided into two boxes with the same label. `regions` must partition
/// the bounds of `template`.
pub fn regions_to_tree(template: &Partitioning, regions: &[Region]) -> DecisionTree {
    let lo: Index = Index::from_elem(0, template.dims());
    let hi: Index = Index::from_slice(template.shape());
    let mut nodes = Vec::new();
    build(template, regions.to_vec(), lo, hi, &mut nodes);
    DecisionTree::new(template.domain().to_vec(), template.actions().to_vec(), nodes, 0)
        .expect("builder emits well-formed trees")
}

fn build(part: &Partitioning, regions: Vec<Region>, lo: Index, hi: Index, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    let first = regions[0].label;
    if regions.iter().all(|r| r.label == first) {
        nodes.push(Node::Leaf(first));
        return id;
    }
    nodes.push(Node::Leaf(first));

    let w = regions.len() as u64;
    let mut best: Option<(u64, usize, u32)> = None;
    let mut mins: Vec<u32> = Vec::with_capacity(regions.len());
    let mut maxs: Vec<u32> = Vec::with_capacity(regions.len());
    for d in 0..part.dims() {
        mins.clear();
        maxs.clear();
        mins.extend(regions.iter().map(|r| r.p_min[d]));
        maxs.extend(regions.iter().map(|r| r.p_max[d]));
        mins.sort_unstable();
        maxs.sort_unstable();
        let mut candidates: Vec<u32> = mins
            .iter()
            .chain(&maxs)
            .copied()
            .filter(|&j| lo[d] < j && j < hi[d])
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        for j in candidates {
            let n_left = mins.partition_point(|&x| x < j) as u64;
            let n_right = w - maxs.partition_point(|&x| x <= j) as u64;
            let split = n_left + n_right - w;
            let score = split * (w + 1) + n_left.abs_diff(n_right);
            if best.is_none_or(|(s, _, _)| score < s) {
                best = Some((score, d, j));
            }
        }
    }
    let (_, d, j) = best.expect("regions with different labels share an inner face");

    let mut left = Vec::new();
    let mut right = Vec::new();
    for r in regions {
        if r.p_max[d] <= j {
            left.push(r);
        } else if r.p_min[d] >= j {
            right.push(r);
        } else {
            let mut l = r.clone();
            l.p_max[d] = j;
            let mut rr = r;
            rr.p_min[d] = j;
            left.push(l);
            right.push(rr);
        }
    }
    let mut left_hi = hi.clone();
    left_hi[d] = j;
    let mut right_lo = lo.clone();
    right_lo[d] = j;
    let l = build(part, left, lo, left_hi, nodes);
    let r = build(part, right, right_lo, hi, nodes);
    nodes[id as usize] = Node::Inner {
        dim: d as u32,
        threshold: part.bounds().row(d)[j as usize],
        left: l,
        right: r,
    };
    id
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompactOptions {
    pub seed: u64,
    pub max_iterations: u32,
    /// Stop once an iteration shrinks the tree by less than this fraction.
    pub min_relative_gain: f64,
}

impl Default for CompactOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            max_iterations: 10,
            min_relative_gain: 0.01,
        }
    }
}

/// Sizes observed in one compaction iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompactionStep {
    pub input_regions: usize,
    pub caap_regions: usize,
    pub tree_leaves: usize,
    /// The tree was smaller than every earlier result and became the
    /// input of the next iteration.
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct Compaction {
    pub tree: DecisionTree,
    pub history: Vec<CompactionStep>,
}

impl Compaction {
    /// Regions of the returned tree (its leaf count).
    pub fn regions(&self) -> usize {
        self.tree.num_leaves()
    }
}

/// Alternates [`caap_pass`] and [`regions_to_tree`] on `source`, feeding
/// each smaller tree back in, until the relative gain drops below the
/// threshold, the tree stops shrinking, or the iteration budget runs out.
/// Returns the smallest tree seen, never larger than a tree built directly
/// over the regions of `source`.
pub fn compact(source: &Partitioning, options: &CompactOptions) -> Result<Compaction, CaapError> {
    let mut history = Vec::new();
    let mut best: Option<DecisionTree> = None;
    let mut best_size = source.num_regions();
    let mut input: Option<Partitioning> = None;
    for i in 0..options.max_iterations.max(1) {
        let part = input.as_ref().unwrap_or(source);
        let regions = caap_pass(part, seeding::derive(options.seed, &[i as u64]));
        let tree = regions_to_tree(part, &regions);
        let leaves = tree.num_leaves();
        let accepted = leaves < best_size || best.is_none() && leaves <= best_size;
        history.push(CompactionStep {
            input_regions: part.num_regions(),
            caap_regions: regions.len(),
            tree_leaves: leaves,
            accepted,
        });
        if !accepted {
            if best.is_none() {
                // The first pass came out larger than the input; keep
                // whichever of it and a tree over the input's own regions
                // is smaller.
                let regions: Vec<Region> = source.regions().collect();
                let direct = regions_to_tree(source, &regions);
                best = Some(if direct.num_leaves() < leaves { direct } else { tree });
            }
            break;
        }
        let gain = (best_size - leaves) as f64 / best_size as f64;
        best_size = leaves;
        input = Some(partitioning_of_tree(&tree)?);
        best = Some(tree);
        if gain < options.min_relative_gain {
            break;
        }
    }
    Ok(Compaction {
        tree: best.expect("at least one iteration runs"),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caap::BoundsMatrix;
    use crate::grid::Axis;
    use crate::model::ActionSet;

    fn square(n: usize) -> Partitioning {
        let m: Vec<f64> = (0..=n).map(|i| i as f64).collect();
        let regions: Vec<Region> = (0..n as u32)
            .flat_map(|x| (0..n as u32).map(move |y| Region::new(&[x, y], &[x + 1, y + 1], ActionSet(1))))
            .collect();
        Partitioning::from_regions(
            vec![Axis::continuous("x", 0.0, n as f64, n as u32), Axis::continuous("y", 0.0, n as f64, n as u32)],
            vec!["a".into(), "b".into()],
            BoundsMatrix::new(vec![m.clone(), m]).unwrap(),
            &regions,
        )
        .unwrap()
    }

    #[test]
    fn one_region_is_one_leaf() {
        let p = square(3);
        let t = regions_to_tree(&p, &[Region::new(&[0, 0], &[3, 3], ActionSet(2))]);
        assert_eq!(t.nodes(), &[Node::Leaf(ActionSet(2))]);
    }

    #[test]
    fn two_regions_one_split() {
        let p = square(3);
        let t = regions_to_tree(
            &p,
            &[
                Region::new(&[0, 0], &[3, 1], ActionSet(1)),
                Region::new(&[0, 1], &[3, 3], ActionSet(2)),
            ],
        );
        assert_eq!(t.num_leaves(), 2);
        assert_eq!(
            t.nodes()[0],
            Node::Inner {
                dim: 1,
                threshold: 1.0,
                left: 1,
                right: 2
            }
        );
    }

    #[test]
    fn prefers_unsplitting_plane_then_balance() {
        // Three vertical strips with labels a, b, a: planes x=1 and x=2 both
        // split nothing and are equally unbalanced, so the lower one wins.
        let p = square(3);
        let regions = [
            Region::new(&[0, 0], &[1, 3], ActionSet(1)),
            Region::new(&[1, 0], &[2, 3], ActionSet(2)),
            Region::new(&[2, 0], &[3, 3], ActionSet(1)),
        ];
        let t = regions_to_tree(&p, &regions);
        assert!(matches!(t.nodes()[0], Node::Inner { dim: 0, threshold, .. } if threshold == 1.0));
        assert_eq!(t.num_leaves(), 3);
    }

    #[test]
    fn compaction_of_uniform_grid() {
        let c = compact(&square(5), &CompactOptions::default()).unwrap();
        assert_eq!(c.regions(), 1);
        assert_eq!(c.history[0].input_regions, 25);
        assert!(c.history[0].accepted);
    }
}
