//! Intervals and axis-aligned hyper-rectangles (events / regions).

use crate::model::{VarDomain, VariableMeta};
use serde::{Deserialize, Serialize};

/// One-dimensional interval with independently open or closed endpoints.
///
/// For discrete variables, intervals are normalized to closed integer
/// intervals; an empty interval is represented by `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub lo_open: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub hi_open: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Interval {
    pub fn new(lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> Self {
        Self { lo, hi, lo_open, hi_open }
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, false, false)
    }

    pub fn point(v: f64) -> Self {
        Self::closed(v, v)
    }

    /// Canonical empty interval.
    pub fn empty() -> Self {
        Self::closed(1.0, 0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && (self.lo_open || self.hi_open))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi && !self.lo_open && !self.hi_open
    }

    pub fn contains(&self, x: f64) -> bool {
        let lo_ok = if self.lo_open { x > self.lo } else { x >= self.lo };
        let hi_ok = if self.hi_open { x < self.hi } else { x <= self.hi };
        lo_ok && hi_ok
    }

    /// Intersection; the tighter bound wins, equal bounds take the stricter flag.
    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_open) = if self.lo > other.lo {
            (self.lo, self.lo_open)
        } else if other.lo > self.lo {
            (other.lo, other.lo_open)
        } else {
            (self.lo, self.lo_open || other.lo_open)
        };
        let (hi, hi_open) = if self.hi < other.hi {
            (self.hi, self.hi_open)
        } else if other.hi < self.hi {
            (other.hi, other.hi_open)
        } else {
            (self.hi, self.hi_open || other.hi_open)
        };
        Interval { lo, hi, lo_open, hi_open }
    }

    /// True when `self` lies entirely inside `outer`.
    pub fn subset_of(&self, outer: &Interval) -> bool {
        if self.is_empty() {
            return true;
        }
        let lo_ok = self.lo > outer.lo
            || (self.lo == outer.lo && (self.lo_open || !outer.lo_open));
        let hi_ok = self.hi < outer.hi
            || (self.hi == outer.hi && (self.hi_open || !outer.hi_open));
        lo_ok && hi_ok
    }

    /// Snap to the integer lattice: open endpoints become closed on the next
    /// integer inward, fractional bounds round inward.
    pub fn normalize_discrete(&self) -> Interval {
        if self.is_empty() {
            return Interval::empty();
        }
        let lo = if self.lo_open {
            (self.lo + 1.0).ceil().max(self.lo.floor() + 1.0)
        } else {
            self.lo.ceil()
        };
        let hi = if self.hi_open {
            (self.hi - 1.0).floor().min(self.hi.ceil() - 1.0)
        } else {
            self.hi.floor()
        };
        if lo > hi {
            Interval::empty()
        } else {
            Interval::closed(lo, hi)
        }
    }

    /// Clip to a variable's domain and canonicalize per its kind.
    pub fn canonicalize(&self, meta: &VariableMeta) -> Interval {
        let clipped = self.intersect(&meta.full_interval());
        match meta.domain {
            VarDomain::Discrete { .. } => clipped.normalize_discrete(),
            VarDomain::Continuous { .. } => {
                if clipped.is_empty() {
                    Interval::empty()
                } else {
                    clipped
                }
            }
        }
    }

    /// Measure for tiling checks: lattice count for discrete variables,
    /// length for continuous ones.
    pub fn measure(&self, meta: &VariableMeta) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        match meta.domain {
            VarDomain::Discrete { .. } => self.hi - self.lo + 1.0,
            VarDomain::Continuous { .. } => self.hi - self.lo,
        }
    }
}

/// Axis-aligned hyper-rectangle holding one interval per model variable.
///
/// Used both as the query object and as split/multi-leaf condition regions;
/// variables outside a scope carry the full-domain interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Event {
    pub intervals: Vec<Interval>,
}

/// A split or multi-leaf condition region is stored exactly like an event.
pub type Region = Event;

impl Event {
    /// Event with no constraints: the full domain of every variable.
    pub fn full(vars: &[VariableMeta]) -> Self {
        Self {
            intervals: vars.iter().map(|v| v.full_interval()).collect(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.intervals.len()
    }

    pub fn get(&self, var: usize) -> &Interval {
        &self.intervals[var]
    }

    pub fn set(&mut self, var: usize, interval: Interval) {
        self.intervals[var] = interval;
    }

    /// Clip every interval to its variable's domain and normalize discrete ones.
    pub fn canonicalize(&self, vars: &[VariableMeta]) -> Event {
        Event {
            intervals: self
                .intervals
                .iter()
                .zip(vars)
                .map(|(iv, meta)| iv.canonicalize(meta))
                .collect(),
        }
    }

    /// Per-variable intersection.
    pub fn intersect(&self, other: &Event) -> Event {
        Event {
            intervals: self
                .intervals
                .iter()
                .zip(&other.intervals)
                .map(|(a, b)| a.intersect(b))
                .collect(),
        }
    }

    /// True when any interval of the given scope is empty.
    pub fn is_empty_on(&self, scope: &[usize]) -> bool {
        scope.iter().any(|&v| self.intervals[v].is_empty())
    }

    pub fn is_empty_anywhere(&self) -> bool {
        self.intervals.iter().any(|iv| iv.is_empty())
    }

    /// Intervals of the given scope variables, in scope order.
    pub fn gather(&self, scope: &[usize]) -> Vec<Interval> {
        scope.iter().map(|&v| self.intervals[v]).collect()
    }

    pub fn contains_point(&self, point: &[f64]) -> bool {
        self.intervals
            .iter()
            .zip(point)
            .all(|(iv, &x)| iv.contains(x))
    }

    /// Product measure over the given scope.
    pub fn measure_on(&self, scope: &[usize], vars: &[VariableMeta]) -> f64 {
        scope
            .iter()
            .map(|&v| self.intervals[v].measure(&vars[v]))
            .product()
    }

    /// True when the two rectangles have empty intersection on `scope`.
    pub fn disjoint_on(&self, other: &Event, scope: &[usize], vars: &[VariableMeta]) -> bool {
        scope.iter().any(|&v| {
            self.intervals[v]
                .intersect(&other.intervals[v])
                .canonicalize(&vars[v])
                .is_empty()
        })
    }
}
