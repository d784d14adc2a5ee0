//! Axis-aligned partitions of the input box.
//!
//! A [`PartitionPattern`] splits one input's interval at interior breakpoints.
//! A [`PartitionProfile`] holds one pattern per input; the Cartesian products
//! of the per-input cells are its subsets. Cells are half-open `[lo, hi)`
//! except the top cell of each input, which is closed, so the cells tile the
//! box without overlap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::Interval;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPattern {
    pub input: usize,
    pub breakpoints: Vec<f64>,
}

impl PartitionPattern {
    pub fn new(input: usize, breakpoints: Vec<f64>, domain: Interval) -> Result<Self> {
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::invalid(format!(
                    "breakpoints of input {input} must be strictly increasing: {breakpoints:?}"
                )));
            }
        }
        if let Some(b) = breakpoints
            .iter()
            .find(|b| !(**b > domain.lo && **b < domain.hi))
        {
            return Err(Error::invalid(format!(
                "breakpoint {b} of input {input} is not strictly inside [{}, {}]",
                domain.lo, domain.hi
            )));
        }
        Ok(Self { input, breakpoints })
    }

    /// Splits the domain into `parts` equal cells.
    pub fn equal(input: usize, parts: usize, domain: Interval) -> Result<Self> {
        if parts == 0 {
            return Err(Error::invalid("a pattern needs at least one cell"));
        }
        let breakpoints = (1..parts)
            .map(|k| domain.lo + domain.width() * k as f64 / parts as f64)
            .collect();
        Self::new(input, breakpoints, domain)
    }

    pub fn cells(&self) -> usize {
        self.breakpoints.len() + 1
    }

    /// Cell containing `x`; breakpoints belong to the cell above them.
    pub fn cell_of(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|b| *b <= x)
    }

    pub fn cell_bounds(&self, cell: usize, domain: Interval) -> Interval {
        let lo = if cell == 0 {
            domain.lo
        } else {
            self.breakpoints[cell - 1]
        };
        let hi = if cell == self.breakpoints.len() {
            domain.hi
        } else {
            self.breakpoints[cell]
        };
        Interval { lo, hi }
    }
}

/// Subset of the input box produced by a profile: one cell index per input.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubsetId {
    pub profile: usize,
    pub cells: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionProfile {
    pub id: usize,
    domains: Vec<Interval>,
    patterns: Vec<PartitionPattern>,
}

impl PartitionProfile {
    pub fn new(id: usize, domains: Vec<Interval>, patterns: Vec<PartitionPattern>) -> Result<Self> {
        if patterns.len() != domains.len() {
            return Err(Error::Dimension {
                what: "partition patterns",
                expected: domains.len(),
                got: patterns.len(),
            });
        }
        for (i, (p, dom)) in patterns.iter().zip(&domains).enumerate() {
            if p.input != i {
                return Err(Error::invalid(format!(
                    "pattern at position {i} is declared for input {}",
                    p.input
                )));
            }
            PartitionPattern::new(i, p.breakpoints.clone(), *dom)?;
        }
        Ok(Self {
            id,
            domains,
            patterns,
        })
    }

    /// Profile with no breakpoints anywhere.
    pub fn unpartitioned(id: usize, domains: Vec<Interval>) -> Self {
        let patterns = (0..domains.len())
            .map(|i| PartitionPattern {
                input: i,
                breakpoints: vec![],
            })
            .collect();
        Self {
            id,
            domains,
            patterns,
        }
    }

    /// Profile from per-input breakpoint lists.
    pub fn from_breakpoints(
        id: usize,
        domains: Vec<Interval>,
        breakpoints: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if breakpoints.len() != domains.len() {
            return Err(Error::Dimension {
                what: "breakpoint lists",
                expected: domains.len(),
                got: breakpoints.len(),
            });
        }
        let patterns = breakpoints
            .into_iter()
            .zip(&domains)
            .enumerate()
            .map(|(i, (b, dom))| PartitionPattern::new(i, b, *dom))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id,
            domains,
            patterns,
        })
    }

    pub fn domains(&self) -> &[Interval] {
        &self.domains
    }

    pub fn patterns(&self) -> &[PartitionPattern] {
        &self.patterns
    }

    /// `|A(p)|`, the product of per-input cell counts.
    pub fn subset_count(&self) -> usize {
        self.patterns.iter().map(PartitionPattern::cells).product()
    }

    /// Row-major position of a subset in [`enumerate_subsets`] order.
    pub fn flat_index(&self, subset: &SubsetId) -> usize {
        subset
            .cells
            .iter()
            .zip(&self.patterns)
            .fold(0, |acc, (c, p)| acc * p.cells() + c)
    }

    pub fn subset_at(&self, flat: usize) -> SubsetId {
        let mut cells = vec![0; self.patterns.len()];
        let mut rest = flat;
        for (i, p) in self.patterns.iter().enumerate().rev() {
            cells[i] = rest % p.cells();
            rest /= p.cells();
        }
        SubsetId {
            profile: self.id,
            cells,
        }
    }

    /// Flat index of the subset containing `u`.
    pub fn locate_index(&self, u: &[f64]) -> Result<usize> {
        Ok(self.flat_index(&locate(self, u)?))
    }

    /// Bounds of a subset, one interval per input.
    pub fn subset_bounds(&self, subset: &SubsetId) -> Vec<Interval> {
        subset
            .cells
            .iter()
            .zip(self.patterns.iter().zip(&self.domains))
            .map(|(c, (p, dom))| p.cell_bounds(*c, *dom))
            .collect()
    }
}

/// All subsets of `profile` in lexicographic order (first input slowest).
pub fn enumerate_subsets(profile: &PartitionProfile) -> Vec<SubsetId> {
    (0..profile.subset_count())
        .map(|k| profile.subset_at(k))
        .collect()
}

/// The unique subset whose cell contains `u`.
pub fn locate(profile: &PartitionProfile, u: &[f64]) -> Result<SubsetId> {
    if u.len() != profile.domains.len() {
        return Err(Error::Dimension {
            what: "input vector",
            expected: profile.domains.len(),
            got: u.len(),
        });
    }
    let mut cells = Vec::with_capacity(u.len());
    for (i, ((x, p), dom)) in u
        .iter()
        .zip(&profile.patterns)
        .zip(&profile.domains)
        .enumerate()
    {
        if !dom.contains(*x) {
            return Err(Error::DomainViolation {
                input: i,
                value: *x,
                lo: dom.lo,
                hi: dom.hi,
            });
        }
        cells.push(p.cell_of(*x));
    }
    Ok(SubsetId {
        profile: profile.id,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn unit() -> Interval {
        Interval { lo: 0.0, hi: 1.0 }
    }

    /// Membership by scanning every subset's bounds.
    fn brute_force(profile: &PartitionProfile, u: &[f64]) -> Vec<usize> {
        enumerate_subsets(profile)
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                profile
                    .subset_bounds(s)
                    .iter()
                    .zip(u)
                    .zip(&profile.patterns)
                    .all(|((b, x), p)| {
                        let top = b.hi == profile.domains[p.input].hi;
                        *x >= b.lo && (*x < b.hi || (top && *x <= b.hi))
                    })
            })
            .map(|(k, _)| k)
            .collect()
    }

    #[test]
    fn two_by_two_enumeration() {
        let p =
            PartitionProfile::from_breakpoints(0, vec![unit(), unit()], vec![vec![0.5], vec![0.5]])
                .unwrap();
        let subsets = enumerate_subsets(&p);
        let cells: Vec<Vec<usize>> = subsets.iter().map(|s| s.cells.clone()).collect();
        // U11 x U21, U11 x U22, U12 x U21, U12 x U22
        assert_eq!(cells, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn unpartitioned_has_one_subset() {
        let p = PartitionProfile::unpartitioned(3, vec![unit(), unit(), unit()]);
        assert_eq!(enumerate_subsets(&p).len(), 1);
        assert_eq!(p.locate_index(&[0.0, 0.5, 1.0]).unwrap(), 0);
        assert_eq!(p.locate_index(&[1.0, 1.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn product_count() {
        let p = PartitionProfile::from_breakpoints(
            0,
            vec![unit(), unit()],
            vec![vec![0.2, 0.7], vec![0.1, 0.4, 0.9]],
        )
        .unwrap();
        assert_eq!(enumerate_subsets(&p).len(), 12);
    }

    #[test]
    fn breakpoint_goes_to_upper_cell() {
        let p = PartitionProfile::from_breakpoints(0, vec![unit()], vec![vec![0.25, 0.5]]).unwrap();
        assert_eq!(locate(&p, &[0.25]).unwrap().cells, vec![1]);
        assert_eq!(locate(&p, &[0.5]).unwrap().cells, vec![2]);
        assert_eq!(locate(&p, &[1.0]).unwrap().cells, vec![2]);
        assert_eq!(locate(&p, &[0.0]).unwrap().cells, vec![0]);
    }

    #[test]
    fn outside_domain_rejected() {
        let p = PartitionProfile::unpartitioned(0, vec![unit()]);
        assert!(matches!(
            locate(&p, &[1.01]),
            Err(Error::DomainViolation { .. })
        ));
        assert!(locate(&p, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn invalid_patterns_rejected() {
        assert!(PartitionPattern::new(0, vec![0.5, 0.5], unit()).is_err());
        assert!(PartitionPattern::new(0, vec![0.0], unit()).is_err());
        assert!(PartitionPattern::new(0, vec![1.0], unit()).is_err());
        assert!(PartitionPattern::new(0, vec![0.7, 0.3], unit()).is_err());
    }

    #[test]
    fn cells_tile_the_box() {
        let dom = vec![Interval { lo: -1.0, hi: 3.0 }, unit()];
        let p = PartitionProfile::from_breakpoints(
            1,
            dom.clone(),
            vec![vec![0.0, 1.0, 2.5], vec![0.5]],
        )
        .unwrap();
        let mut rng = RngStream::new(17);
        for n in 0..100_000 {
            let u = if n % 10 == 0 {
                // hit breakpoints and edges on purpose
                let pick = |xs: &[f64], r: &mut RngStream| xs[r.index(xs.len())];
                vec![
                    pick(&[-1.0, 0.0, 1.0, 2.5, 3.0], &mut rng),
                    pick(&[0.0, 0.5, 1.0], &mut rng),
                ]
            } else {
                vec![rng.uniform_in(-1.0, 3.0), rng.uniform()]
            };
            let found = p.locate_index(&u).unwrap();
            assert_eq!(brute_force(&p, &u), vec![found], "u = {u:?}");
        }
    }

    #[test]
    fn flat_index_round_trip() {
        let p = PartitionProfile::from_breakpoints(
            0,
            vec![unit(), unit()],
            vec![vec![0.3], vec![0.2, 0.6]],
        )
        .unwrap();
        for (k, s) in enumerate_subsets(&p).iter().enumerate() {
            assert_eq!(p.flat_index(s), k);
        }
    }

    #[test]
    fn equal_split() {
        let p = PartitionPattern::equal(0, 2, unit()).unwrap();
        assert_eq!(p.breakpoints, vec![0.5]);
        assert_eq!(PartitionPattern::equal(0, 1, unit()).unwrap().cells(), 1);
    }
}
