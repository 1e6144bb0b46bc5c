//! Greedy growth of maximal same-label boxes.
//!
//! A box may grow when all cells it would cover share its label (rule 1),
//! none of them belongs to an already fixed box (rule 2), and no original
//! region is left in a non-box shape (rule 3). Rule 3 is judged against the
//! part of each original region that is still uncovered, which by induction
//! is always a single box.

use rand::{Rng, SeedableRng};
use smallvec::SmallVec;

use super::{for_each_in_box, Index, Partitioning, Region};
use crate::model::SimRng;

const NONE: u32 = u32::MAX;

/// Outcome of checking a candidate box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expansion {
    Legal,
    /// Two covered cells carry different labels.
    Rule1,
    /// The candidate overlaps a fixed box.
    Rule2,
    /// The candidate would split these original regions.
    Rule3(Vec<u32>),
}

/// State of one coarsening pass over a partitioning.
#[derive(Debug, Clone)]
pub struct Coarsening<'a> {
    part: &'a Partitioning,
    fixed_owner: Vec<u32>,
    fixed: Vec<Region>,
    // Uncovered remainder of every original region, flat like the source.
    rem_lo: Vec<u32>,
    rem_hi: Vec<u32>,
    cursor: u64,
    stamp: Vec<u32>,
    epoch: u32,
    seen: Vec<u32>,
    partial: Vec<u32>,
}

/// Whether `r \ c` is neither empty nor a box, given that they intersect.
fn cuts(rlo: &[u32], rhi: &[u32], clo: &[u32], chi: &[u32]) -> bool {
    let mut open_dim = None;
    for d in 0..rlo.len() {
        if clo[d] > rlo[d] || chi[d] < rhi[d] {
            if open_dim.is_some() {
                return true;
            }
            open_dim = Some(d);
        }
    }
    match open_dim {
        None => false,
        Some(d) => clo[d] > rlo[d] && chi[d] < rhi[d],
    }
}

impl<'a> Coarsening<'a> {
    pub fn new(part: &'a Partitioning) -> Self {
        Self {
            part,
            fixed_owner: vec![NONE; part.micro_cells() as usize],
            fixed: Vec::new(),
            rem_lo: part.lo.clone(),
            rem_hi: part.hi.clone(),
            cursor: 0,
            stamp: vec![0; part.num_regions()],
            epoch: 0,
            seen: Vec::new(),
            partial: Vec::new(),
        }
    }

    pub fn partitioning(&self) -> &Partitioning {
        self.part
    }

    pub fn fixed(&self) -> &[Region] {
        &self.fixed
    }

    pub fn into_fixed(self) -> Vec<Region> {
        self.fixed
    }

    fn rem(&self, r: u32) -> (&[u32], &[u32]) {
        let k = self.part.dims();
        let i = r as usize * k;
        (&self.rem_lo[i..i + k], &self.rem_hi[i..i + k])
    }

    /// Uncovered remainder of original region `r`, if any.
    pub fn remainder(&self, r: u32) -> Option<Region> {
        let (lo, hi) = self.rem(r);
        lo.iter()
            .zip(hi)
            .all(|(a, b)| a < b)
            .then(|| Region::new(lo, hi, self.part.region_label(r)))
    }

    /// Checks every rule for `candidate` by scanning all of its cells.
    pub fn check(&self, candidate: &Region) -> Expansion {
        let part = self.part;
        let (mut rule1, mut rule2) = (false, false);
        let mut owners = Vec::new();
        for_each_in_box(part.strides(), &candidate.p_min, &candidate.p_max, |c| {
            rule1 |= part.label(c) != candidate.label;
            rule2 |= self.fixed_owner[c as usize] != NONE;
            owners.push(part.owner(c));
            true
        });
        if rule1 {
            return Expansion::Rule1;
        }
        if rule2 {
            return Expansion::Rule2;
        }
        owners.sort_unstable();
        owners.dedup();
        let broken: Vec<u32> = owners
            .into_iter()
            .filter(|&r| {
                let (lo, hi) = self.rem(r);
                cuts(lo, hi, &candidate.p_min, &candidate.p_max)
            })
            .collect();
        if broken.is_empty() {
            Expansion::Legal
        } else {
            Expansion::Rule3(broken)
        }
    }

    /// Adds `region` to the fixed set and shrinks the remainders it covers.
    ///
    /// # Panics
    /// If `region` overlaps a fixed box or splits an original region.
    pub fn fix(&mut self, region: Region) {
        let part = self.part;
        let id = self.fixed.len() as u32;
        let mut owners = Vec::new();
        let fixed_owner = &mut self.fixed_owner;
        for_each_in_box(part.strides(), &region.p_min, &region.p_max, |c| {
            assert_eq!(fixed_owner[c as usize], NONE, "fixed regions overlap");
            fixed_owner[c as usize] = id;
            owners.push(part.owner(c));
            true
        });
        owners.sort_unstable();
        owners.dedup();
        let k = part.dims();
        for r in owners {
            let i = r as usize * k;
            let (lo, hi) = (&mut self.rem_lo[i..i + k], &mut self.rem_hi[i..i + k]);
            assert!(!cuts(lo, hi, &region.p_min, &region.p_max), "fixed region splits region {r}");
            match (0..k).find(|&d| region.p_min[d] > lo[d] || region.p_max[d] < hi[d]) {
                None => hi.copy_from_slice(lo),
                Some(d) => {
                    if region.p_min[d] <= lo[d] {
                        lo[d] = region.p_max[d];
                    } else {
                        hi[d] = region.p_min[d];
                    }
                }
            }
        }
        self.fixed.push(region);
    }

    /// The uncovered remainder containing the lexicographically smallest
    /// uncovered micro-cell, or `None` once everything is fixed.
    pub fn next_start(&mut self) -> Option<Region> {
        let total = self.part.micro_cells();
        while self.cursor < total && self.fixed_owner[self.cursor as usize] != NONE {
            self.cursor += 1;
        }
        if self.cursor == total {
            return None;
        }
        let owner = self.part.owner(self.cursor);
        let start = self.remainder(owner).expect("uncovered cell has a remainder");
        debug_assert_eq!(self.part.micro_id(&start.p_min), self.cursor);
        Some(start)
    }

    /// Grows `cur` in dimension `d` up to `new_hi`, or leaves it unchanged
    /// and reports the violated rule.
    fn try_grow(&mut self, cur: &mut Region, d: usize, new_hi: u32) -> Expansion {
        let part = self.part;
        let saved_seen = self.seen.len();
        let saved_partial = self.partial.clone();

        let mut slab_lo = cur.p_min.clone();
        slab_lo[d] = cur.p_max[d];
        let mut slab_hi = cur.p_max.clone();
        slab_hi[d] = new_hi;

        let mut verdict = Expansion::Legal;
        let (fixed_owner, stamp, seen, partial, epoch) = (
            &self.fixed_owner,
            &mut self.stamp,
            &mut self.seen,
            &mut self.partial,
            self.epoch,
        );
        for_each_in_box(part.strides(), &slab_lo, &slab_hi, |c| {
            if fixed_owner[c as usize] != NONE {
                verdict = Expansion::Rule2;
                return false;
            }
            let o = part.owner(c);
            if part.region_label(o) != cur.label {
                verdict = Expansion::Rule1;
                return false;
            }
            if stamp[o as usize] != epoch {
                stamp[o as usize] = epoch;
                seen.push(o);
                partial.push(o);
            }
            true
        });

        if verdict == Expansion::Legal {
            let mut broken = Vec::new();
            let mut still_partial = Vec::with_capacity(self.partial.len());
            for &r in &self.partial {
                let (lo, hi) = self.rem(r);
                let covered = (0..lo.len()).all(|e| {
                    let (clo, chi) = if e == d { (cur.p_min[e], new_hi) } else { (cur.p_min[e], cur.p_max[e]) };
                    clo <= lo[e] && hi[e] <= chi
                });
                if covered {
                    continue;
                }
                still_partial.push(r);
                let mut chi = cur.p_max.clone();
                chi[d] = new_hi;
                if cuts(lo, hi, &cur.p_min, &chi) {
                    broken.push(r);
                }
            }
            if broken.is_empty() {
                self.partial = still_partial;
                cur.p_max[d] = new_hi;
                return Expansion::Legal;
            }
            verdict = Expansion::Rule3(broken);
        }

        for &r in &self.seen[saved_seen..] {
            self.stamp[r as usize] = 0;
        }
        self.seen.truncate(saved_seen);
        self.partial = saved_partial;
        verdict
    }

    /// Extends `cur` in dimension `d` to the largest upper bound of the
    /// `broken` regions. Returns whether the extended box is legal; on
    /// failure `cur` is unchanged.
    pub fn repair(&mut self, cur: &mut Region, d: usize, broken: &[u32]) -> bool {
        let k = self.part.dims();
        let target = broken
            .iter()
            .map(|&r| self.rem_hi[r as usize * k + d])
            .max()
            .unwrap_or(0);
        target > cur.p_max[d] && self.try_grow(cur, d, target) == Expansion::Legal
    }

    fn begin(&mut self, start: &Region) {
        self.epoch += 1;
        self.seen.clear();
        self.partial.clear();
        let owner = self.part.owner(self.part.micro_id(&start.p_min));
        self.stamp[owner as usize] = self.epoch;
        self.seen.push(owner);
        // The start box is the owner's whole remainder, so it is fully
        // covered and never partial.
    }

    /// Grows `start` (an uncovered remainder) into a locally maximal legal
    /// box, choosing the dimension to try uniformly at random.
    pub fn expand(&mut self, start: Region, rng: &mut SimRng) -> Region {
        let shape: Index = Index::from_slice(self.part.shape());
        let k = shape.len();
        self.begin(&start);
        let mut cur = start;
        let mut open: SmallVec<[bool; 4]> = (0..k).map(|d| cur.p_max[d] < shape[d]).collect();
        let mut cut_blocked: SmallVec<[bool; 4]> = SmallVec::from_elem(false, k);
        loop {
            let choices: SmallVec<[usize; 4]> = (0..k).filter(|&d| open[d]).collect();
            if choices.is_empty() {
                return cur;
            }
            let d = choices[rng.random_range(0..choices.len())];
            let next = cur.p_max[d] + 1;
            let grown = match self.try_grow(&mut cur, d, next) {
                Expansion::Legal => true,
                Expansion::Rule1 | Expansion::Rule2 => {
                    open[d] = false;
                    false
                }
                Expansion::Rule3(broken) => {
                    let ok = self.repair(&mut cur, d, &broken);
                    if !ok {
                        open[d] = false;
                        cut_blocked[d] = true;
                    }
                    ok
                }
            };
            if grown {
                // A larger box can remove a cut that blocked another
                // dimension; rules 1 and 2 only get harder to satisfy.
                for e in 0..k {
                    if cut_blocked[e] {
                        cut_blocked[e] = false;
                        open[e] = true;
                    }
                    if cur.p_max[e] == shape[e] {
                        open[e] = false;
                    }
                }
            }
        }
    }
}

/// One greedy pass: repeatedly takes the lowest uncovered box, grows it
/// and fixes it, until the domain is covered. The result is a partitioning
/// pointwise equal to `part` with at most as many regions.
pub fn caap_pass(part: &Partitioning, seed: u64) -> Vec<Region> {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut c = Coarsening::new(part);
    while let Some(start) = c.next_start() {
        let r = c.expand(start, &mut rng);
        c.fix(r);
    }
    c.into_fixed()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caap::BoundsMatrix;
    use crate::grid::Axis;
    use crate::model::ActionSet;

    const Y: ActionSet = ActionSet(1);
    const P: ActionSet = ActionSet(2);

    fn part(rows: Vec<Vec<f64>>, regions: &[Region]) -> Partitioning {
        let domain = rows
            .iter()
            .enumerate()
            .map(|(i, r)| Axis::continuous(&format!("s{i}"), r[0], *r.last().unwrap(), (r.len() - 1) as u32))
            .collect();
        Partitioning::from_regions(domain, vec!["a".into(), "b".into()], BoundsMatrix::new(rows).unwrap(), regions)
            .unwrap()
    }

    fn r(lo: [u32; 2], hi: [u32; 2], label: ActionSet) -> Region {
        Region::new(&lo, &hi, label)
    }

    /// Bounds (0, 2, 3, 4) on both axes; a yellow cell in the middle column
    /// next to a yellow region spanning the whole right column.
    fn figure() -> Partitioning {
        let m = vec![0.0, 2.0, 3.0, 4.0];
        part(
            vec![m.clone(), m],
            &[
                r([2, 0], [3, 3], Y),
                r([1, 1], [2, 2], Y),
                r([0, 0], [1, 3], P),
                r([1, 0], [2, 1], P),
                r([1, 2], [2, 3], P),
            ],
        )
    }

    #[test]
    fn original_region_is_legal() {
        let p = figure();
        let c = Coarsening::new(&p);
        for reg in p.regions() {
            assert_eq!(c.check(&reg), Expansion::Legal);
        }
    }

    #[test]
    fn mixed_labels_violate_rule1() {
        let p = figure();
        let c = Coarsening::new(&p);
        assert_eq!(c.check(&r([0, 1], [2, 2], Y)), Expansion::Rule1);
    }

    #[test]
    fn overlap_with_fixed_violates_rule2() {
        let p = figure();
        let mut c = Coarsening::new(&p);
        c.fix(r([2, 0], [3, 3], Y));
        assert_eq!(c.check(&r([1, 1], [3, 2], Y)), Expansion::Rule2);
    }

    #[test]
    fn splitting_right_column_violates_rule3() {
        let p = figure();
        let c = Coarsening::new(&p);
        // Covers [2,4) x [2,3): the right column [3,4) x [0,4) would be left
        // as [3,4) x [0,2) and [3,4) x [3,4).
        assert_eq!(c.check(&r([1, 1], [3, 2], Y)), Expansion::Rule3(vec![0]));
        // Taking a slab from one end keeps the remainder a box.
        assert_eq!(c.check(&r([2, 0], [3, 2], Y)), Expansion::Legal);
    }

    fn unit3() -> Vec<Vec<f64>> {
        vec![vec![0.0, 1.0, 2.0, 3.0]; 2]
    }

    #[test]
    fn repair_extends_to_far_bound() {
        // A = [0,1)x[1,2) grows right into R = [1,3)x[1,3), leaving an L.
        let p = part(
            unit3(),
            &[
                r([0, 1], [1, 2], Y),
                r([1, 1], [3, 3], Y),
                r([0, 0], [1, 1], P),
                r([1, 0], [3, 1], P),
                r([0, 2], [1, 3], P),
            ],
        );
        let mut c = Coarsening::new(&p);
        let mut cur = c.next_start().unwrap();
        assert_eq!(cur, r([0, 0], [1, 1], P));
        c.fix(cur);
        cur = c.next_start().unwrap();
        assert_eq!(cur, r([0, 1], [1, 2], Y));
        c.begin(&cur);
        assert_eq!(c.try_grow(&mut cur, 0, 2), Expansion::Rule3(vec![1]));
        assert!(c.repair(&mut cur, 0, &[1]));
        assert_eq!(cur, r([0, 1], [3, 2], Y));
    }

    fn label_clash(blocker_fixed: bool) -> bool {
        let far = if blocker_fixed { Y } else { P };
        let p = part(
            unit3(),
            &[
                r([0, 0], [1, 2], Y),
                r([1, 1], [3, 3], Y),
                r([1, 0], [2, 1], Y),
                r([2, 0], [3, 1], far),
                r([0, 2], [1, 3], P),
            ],
        );
        let mut c = Coarsening::new(&p);
        if blocker_fixed {
            c.fix(r([2, 0], [3, 1], Y));
        }
        let mut cur = c.next_start().unwrap();
        c.begin(&cur);
        assert_eq!(c.try_grow(&mut cur, 0, 2), Expansion::Rule3(vec![1]));
        let before = cur.clone();
        let ok = c.repair(&mut cur, 0, &[1]);
        assert_eq!(cur, before, "failed repair must not change the box");
        ok
    }

    #[test]
    fn repair_fails_on_label_clash() {
        assert!(!label_clash(false));
    }

    #[test]
    fn repair_fails_on_fixed_collision() {
        assert!(!label_clash(true));
    }

    #[test]
    fn uniform_grid_becomes_one_region() {
        let m = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let regions: Vec<Region> = (0..4)
            .flat_map(|x| (0..4).map(move |y| r([x, y], [x + 1, y + 1], Y)))
            .collect();
        let p = part(vec![m.clone(), m], &regions);
        for seed in 0..5 {
            assert_eq!(caap_pass(&p, seed), vec![r([0, 0], [4, 4], Y)]);
        }
    }

    #[test]
    fn island_stays_single_cell() {
        let m = vec![0.0, 1.0, 2.0, 3.0];
        let regions: Vec<Region> = (0..3)
            .flat_map(|x| (0..3).map(move |y| r([x, y], [x + 1, y + 1], if (x, y) == (1, 1) { P } else { Y })))
            .collect();
        let p = part(vec![m.clone(), m], &regions);
        let out = caap_pass(&p, 3);
        assert!(out.contains(&r([1, 1], [2, 2], P)));
    }

    #[test]
    fn checkerboard_cannot_merge() {
        let m = vec![0.0, 1.0, 2.0];
        let regions: Vec<Region> = (0..2)
            .flat_map(|x| (0..2).map(move |y| r([x, y], [x + 1, y + 1], if (x + y) % 2 == 0 { Y } else { P })))
            .collect();
        let p = part(vec![m.clone(), m], &regions);
        assert_eq!(caap_pass(&p, 0).len(), 4);
    }
}
