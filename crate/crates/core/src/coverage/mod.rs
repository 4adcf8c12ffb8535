//! Neuron-level coverage: k-multisection (KMNC), boundary (NBC) and strong
//! activation (SNAC) coverage over a growing set of traces.
//!
//! A [`NeuronProfile`] fixes each neuron's `[low, high]` activation range as
//! observed on a profiling set. Every later activation lands in exactly one
//! cell: one of `k` equal sections of that range, the upper corner
//! (`v > high`) or the lower corner (`v < low`). [`CoverageState`] records
//! which cells have ever been hit; bits only go from clear to set.

mod bitset;
mod io;

pub use bitset::BitSet;
pub use io::{load_profile, read_profile, read_state, save_profile, write_profile, write_state};

use serde::{Deserialize, Serialize};

use crate::error::CoverageError;
use crate::nn::{ActivationTrace, Model};
use crate::tensor::Tensor;

/// Width given to neurons whose profiled range is a single point.
pub const DEGENERATE_EPSILON: f32 = 1e-6;

/// Default number of sections per neuron.
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronProfile {
    low: Vec<f32>,
    high: Vec<f32>,
    k: usize,
}

/// Where one activation value falls relative to a neuron's profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Section(usize),
    Upper,
    Lower,
}

impl NeuronProfile {
    /// Builds a profile from explicit bounds. Degenerate ranges are widened
    /// the same way [`profile`] widens them.
    pub fn from_bounds(low: Vec<f32>, mut high: Vec<f32>, k: usize) -> Result<Self, CoverageError> {
        if k == 0 {
            return Err(CoverageError::InvalidK);
        }
        if low.len() != high.len() {
            return Err(CoverageError::Malformed(format!(
                "{} lower bounds but {} upper bounds",
                low.len(),
                high.len()
            )));
        }
        for (i, (l, h)) in low.iter().zip(high.iter_mut()).enumerate() {
            if !l.is_finite() || !h.is_finite() || *h < *l {
                return Err(CoverageError::Malformed(format!(
                    "neuron {i}: invalid range [{l}, {h}]"
                )));
            }
            if *h == *l {
                *h = widen(*l);
            }
        }
        Ok(NeuronProfile { low, high, k })
    }

    /// Exact min/max over a sequence of traces.
    pub fn from_traces<'a>(
        traces: impl IntoIterator<Item = &'a ActivationTrace>,
        k: usize,
    ) -> Result<Self, CoverageError> {
        let mut traces = traces.into_iter();
        let first = traces.next().ok_or(CoverageError::EmptyProfilingSet)?;
        let mut low = first.values.clone();
        let mut high = first.values.clone();
        for t in traces {
            if t.values.len() != low.len() {
                return Err(CoverageError::DimensionMismatch {
                    expected: low.len(),
                    found: t.values.len(),
                    k_expected: k,
                    k_found: k,
                });
            }
            for ((l, h), &v) in low.iter_mut().zip(high.iter_mut()).zip(&t.values) {
                *l = l.min(v);
                *h = h.max(v);
            }
        }
        Self::from_bounds(low, high, k)
    }

    pub fn neuron_count(&self) -> usize {
        self.low.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn low(&self) -> &[f32] {
        &self.low
    }

    pub fn high(&self) -> &[f32] {
        &self.high
    }

    /// Classifies `v` for neuron `i`. `v == high` is the last section, not
    /// the upper corner.
    #[inline]
    pub fn cell(&self, i: usize, v: f32) -> Cell {
        let (low, high) = (self.low[i], self.high[i]);
        if v > high {
            Cell::Upper
        } else if v < low {
            Cell::Lower
        } else {
            let frac = (v as f64 - low as f64) / (high as f64 - low as f64);
            let s = (frac * self.k as f64).floor() as usize;
            Cell::Section(s.min(self.k - 1))
        }
    }

    /// Flat cell id per neuron: sections first (`i * k + s`), then upper
    /// corners (`n * k + i`), then lower corners (`n * k + n + i`).
    pub fn cells(&self, values: &[f32]) -> Vec<u32> {
        let mut out = vec![0; values.len().min(self.neuron_count())];
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            unsafe { self.cells_avx2(values, &mut out) };
            return out;
        }
        self.cells_inline(values, &mut out);
        out
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn cells_avx2(&self, values: &[f32], out: &mut [u32]) {
        self.cells_inline(values, out)
    }

    /// Branch-free form of [`NeuronProfile::cell`] over all neurons, so the
    /// loop vectorizes. Produces the same ids as classifying one by one.
    #[inline(always)]
    fn cells_inline(&self, values: &[f32], out: &mut [u32]) {
        let n = self.neuron_count();
        let (k, kf, last) = (self.k as u32, self.k as f64, (self.k - 1) as f64);
        let (upper, lower) = ((n * self.k) as u32, (n * self.k + n) as u32);
        let it = out
            .iter_mut()
            .zip(values)
            .zip(self.low.iter().zip(&self.high));
        for (i, ((dst, &v), (&low, &high))) in it.enumerate() {
            let frac = (v as f64 - low as f64) / (high as f64 - low as f64);
            let s = (frac * kf).floor().max(0.0).min(last) as u32;
            let i = i as u32;
            *dst = if v > high {
                upper + i
            } else if v < low {
                lower + i
            } else {
                i * k + s
            };
        }
    }
}

/// `low + ε`, bumped to the next representable value when `ε` is below the
/// resolution of `low`.
fn widen(low: f32) -> f32 {
    let h = low + DEGENERATE_EPSILON;
    if h > low {
        h
    } else {
        low.next_up()
    }
}

/// Runs every profiling input through `model` and records per-neuron bounds.
pub fn profile(
    model: &Model,
    profiling_set: &[Tensor],
    k: usize,
) -> Result<NeuronProfile, CoverageError> {
    if profiling_set.is_empty() {
        return Err(CoverageError::EmptyProfilingSet);
    }
    if k == 0 {
        return Err(CoverageError::InvalidK);
    }
    let n = model.neuron_count();
    let mut low = vec![f32::INFINITY; n];
    let mut high = vec![f32::NEG_INFINITY; n];
    for input in profiling_set {
        let trace = model.forward(input)?;
        for ((l, h), &v) in low.iter_mut().zip(high.iter_mut()).zip(&trace.values) {
            *l = l.min(v);
            *h = h.max(v);
        }
    }
    NeuronProfile::from_bounds(low, high, k)
}

/// Newly set bits produced by one or more updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageDelta {
    pub sections: usize,
    pub upper: usize,
    pub lower: usize,
}

impl CoverageDelta {
    pub fn total(&self) -> usize {
        self.sections + self.upper + self.lower
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// The gain expressed as coverage fractions for a model with
    /// `neurons` neurons and `k` sections.
    pub fn as_vector(&self, neurons: usize, k: usize) -> CoverageVector {
        if neurons == 0 {
            return CoverageVector::default();
        }
        let n = neurons as f64;
        CoverageVector {
            kmnc: self.sections as f64 / (n * k as f64),
            nbc: (self.upper + self.lower) as f64 / (2.0 * n),
            snac: self.upper as f64 / n,
        }
    }
}

impl std::ops::AddAssign for CoverageDelta {
    fn add_assign(&mut self, rhs: Self) {
        self.sections += rhs.sections;
        self.upper += rhs.upper;
        self.lower += rhs.lower;
    }
}

/// The three coverage fractions, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageVector {
    pub kmnc: f64,
    pub nbc: f64,
    pub snac: f64,
}

impl CoverageVector {
    pub fn new(kmnc: f64, nbc: f64, snac: f64) -> Self {
        CoverageVector { kmnc, nbc, snac }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.kmnc, self.nbc, self.snac]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        CoverageVector::new(a[0], a[1], a[2])
    }

    pub fn sum(&self) -> f64 {
        self.kmnc + self.nbc + self.snac
    }
}

/// Cumulative cell hits for every neuron.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoverageState {
    neurons: usize,
    k: usize,
    sections: BitSet,
    upper: BitSet,
    lower: BitSet,
}

impl CoverageState {
    pub fn new(neurons: usize, k: usize) -> Self {
        CoverageState {
            neurons,
            k,
            sections: BitSet::new(neurons * k),
            upper: BitSet::new(neurons),
            lower: BitSet::new(neurons),
        }
    }

    pub fn for_profile(profile: &NeuronProfile) -> Self {
        Self::new(profile.neuron_count(), profile.k())
    }

    pub(crate) fn from_parts(
        neurons: usize,
        k: usize,
        sections: BitSet,
        upper: BitSet,
        lower: BitSet,
    ) -> Result<Self, CoverageError> {
        if sections.len() != neurons * k || upper.len() != neurons || lower.len() != neurons {
            return Err(CoverageError::Malformed(
                "bitset sizes disagree with header".into(),
            ));
        }
        Ok(CoverageState {
            neurons,
            k,
            sections,
            upper,
            lower,
        })
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sections(&self) -> &BitSet {
        &self.sections
    }

    pub fn upper(&self) -> &BitSet {
        &self.upper
    }

    pub fn lower(&self) -> &BitSet {
        &self.lower
    }

    fn check_profile(&self, profile: &NeuronProfile) -> Result<(), CoverageError> {
        if profile.neuron_count() != self.neurons || profile.k() != self.k {
            return Err(CoverageError::DimensionMismatch {
                expected: self.neurons,
                found: profile.neuron_count(),
                k_expected: self.k,
                k_found: profile.k(),
            });
        }
        Ok(())
    }

    /// Records the cell every neuron of `trace` falls in.
    pub fn update(
        &mut self,
        profile: &NeuronProfile,
        trace: &ActivationTrace,
    ) -> Result<CoverageDelta, CoverageError> {
        self.check_profile(profile)?;
        if trace.values.len() != self.neurons {
            return Err(CoverageError::DimensionMismatch {
                expected: self.neurons,
                found: trace.values.len(),
                k_expected: self.k,
                k_found: self.k,
            });
        }
        Ok(self.update_values(profile, &trace.values))
    }

    pub(crate) fn update_values(
        &mut self,
        profile: &NeuronProfile,
        values: &[f32],
    ) -> CoverageDelta {
        let mut delta = CoverageDelta::default();
        for (i, &v) in values.iter().enumerate() {
            match profile.cell(i, v) {
                Cell::Section(s) => {
                    delta.sections += usize::from(self.sections.insert(i * self.k + s))
                }
                Cell::Upper => delta.upper += usize::from(self.upper.insert(i)),
                Cell::Lower => delta.lower += usize::from(self.lower.insert(i)),
            }
        }
        delta
    }

    /// Records cell ids produced by [`NeuronProfile::cells`].
    pub fn update_cells(&mut self, cells: &[u32]) -> CoverageDelta {
        let nk = self.neurons * self.k;
        let mut delta = CoverageDelta::default();
        for &c in cells {
            let c = c as usize;
            if c < nk {
                delta.sections += usize::from(self.sections.insert(c));
            } else if c < nk + self.neurons {
                delta.upper += usize::from(self.upper.insert(c - nk));
            } else {
                delta.lower += usize::from(self.lower.insert(c - nk - self.neurons));
            }
        }
        delta
    }

    /// Bits set here but not in `base`: the coverage `self` would add.
    pub fn gain_over(&self, base: &CoverageState) -> CoverageDelta {
        CoverageDelta {
            sections: self.sections.count_difference(&base.sections),
            upper: self.upper.count_difference(&base.upper),
            lower: self.lower.count_difference(&base.lower),
        }
    }

    /// New bits `trace` would set, without modifying the state.
    pub fn gain_of(&self, profile: &NeuronProfile, trace: &ActivationTrace) -> CoverageDelta {
        let mut delta = CoverageDelta::default();
        for (i, &v) in trace.values.iter().enumerate() {
            match profile.cell(i, v) {
                Cell::Section(s) => {
                    delta.sections += usize::from(!self.sections.contains(i * self.k + s))
                }
                Cell::Upper => delta.upper += usize::from(!self.upper.contains(i)),
                Cell::Lower => delta.lower += usize::from(!self.lower.contains(i)),
            }
        }
        delta
    }

    pub fn kmnc(&self) -> f64 {
        ratio(self.sections.count_ones(), self.neurons * self.k)
    }

    pub fn nbc(&self) -> f64 {
        ratio(
            self.upper.count_ones() + self.lower.count_ones(),
            2 * self.neurons,
        )
    }

    pub fn snac(&self) -> f64 {
        ratio(self.upper.count_ones(), self.neurons)
    }

    pub fn vector(&self) -> CoverageVector {
        CoverageVector::new(self.kmnc(), self.nbc(), self.snac())
    }

    /// Total set bits across all three bitsets.
    pub fn popcount(&self) -> usize {
        self.sections.count_ones() + self.upper.count_ones() + self.lower.count_ones()
    }

    /// Bitwise OR with `other` in place.
    pub fn merge_from(&mut self, other: &CoverageState) -> Result<(), CoverageError> {
        if other.neurons != self.neurons || other.k != self.k {
            return Err(CoverageError::DimensionMismatch {
                expected: self.neurons,
                found: other.neurons,
                k_expected: self.k,
                k_found: other.k,
            });
        }
        self.sections.union_with(&other.sections);
        self.upper.union_with(&other.upper);
        self.lower.union_with(&other.lower);
        Ok(())
    }

    /// Whether every bit set here is also set in `other`.
    pub fn is_subset(&self, other: &CoverageState) -> bool {
        self.neurons == other.neurons
            && self.k == other.k
            && self.sections.is_subset(&other.sections)
            && self.upper.is_subset(&other.upper)
            && self.lower.is_subset(&other.lower)
    }
}

/// Bitwise OR of two states with identical dimensions.
pub fn merge(a: &CoverageState, b: &CoverageState) -> Result<CoverageState, CoverageError> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
