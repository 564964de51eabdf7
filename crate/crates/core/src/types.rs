//! Data model shared by every estimation stage: observation records, the
//! dataset with its exposure-group counts, the 32-slot parameter vector and
//! the extended-real index type produced by [`g_transform`].

use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::error::{DataError, LayoutError};

/// One subject: binary outcome, exposure and mediator plus a real confounder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    pub outcome: bool,
    pub exposure: bool,
    pub mediator: bool,
    pub confounder: f64,
}

impl ObservationRecord {
    pub fn new(outcome: bool, exposure: bool, mediator: bool, confounder: f64) -> Self {
        Self {
            outcome,
            exposure,
            mediator,
            confounder,
        }
    }

    /// Builds a record from 0/1 codes, rejecting anything else.
    pub fn from_codes(
        outcome: u8,
        exposure: u8,
        mediator: u8,
        confounder: f64,
    ) -> Result<Self, DataError> {
        let bit = |field: &'static str, v: u8| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DataError::NotBinary { field, value: v }),
        };
        if !confounder.is_finite() {
            return Err(DataError::NonFiniteConfounder { index: 0 });
        }
        Ok(Self::new(
            bit("outcome", outcome)?,
            bit("exposure", exposure)?,
            bit("mediator", mediator)?,
            confounder,
        ))
    }

    pub fn group(&self) -> Group {
        Group::from(self.exposure)
    }

    #[inline]
    pub(crate) fn a(&self) -> f64 {
        if self.exposure {
            1.0
        } else {
            0.0
        }
    }

    #[inline]
    pub(crate) fn m(&self) -> f64 {
        if self.mediator {
            1.0
        } else {
            0.0
        }
    }

    #[inline]
    pub(crate) fn i(&self) -> f64 {
        if self.outcome {
            1.0
        } else {
            0.0
        }
    }

    /// Total order used to make estimation independent of input row order.
    fn canonical_key(&self) -> (u8, u64) {
        let bits = (self.exposure as u8) << 2 | (self.mediator as u8) << 1 | self.outcome as u8;
        // Map the float onto a monotone integer key; -0.0 and 0.0 collapse.
        let l = if self.confounder == 0.0 {
            0.0
        } else {
            self.confounder
        };
        let raw = l.to_bits();
        let key = if raw >> 63 == 1 {
            !raw
        } else {
            raw | (1 << 63)
        };
        (bits, key)
    }
}

/// Exposure group `A = a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Unexposed,
    Exposed,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Unexposed, Group::Exposed];

    pub fn index(self) -> usize {
        match self {
            Group::Unexposed => 0,
            Group::Exposed => 1,
        }
    }

    /// The 0/1 gate `(1 - A)` or `A` for a record.
    #[inline]
    pub fn gate(self, record: &ObservationRecord) -> f64 {
        match self {
            Group::Unexposed => 1.0 - record.a(),
            Group::Exposed => record.a(),
        }
    }
}

impl From<bool> for Group {
    fn from(exposed: bool) -> Self {
        if exposed {
            Group::Exposed
        } else {
            Group::Unexposed
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Unexposed => "unexposed",
            Group::Exposed => "exposed",
        })
    }
}

/// An ordered collection of records together with its exposure-group counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<ObservationRecord>,
    n0: usize,
    n1: usize,
}

impl Dataset {
    /// Validates every confounder and counts the exposure groups. Empty groups
    /// are allowed here; estimation rejects them later.
    pub fn new(records: Vec<ObservationRecord>) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        if let Some(index) = records.iter().position(|r| !r.confounder.is_finite()) {
            return Err(DataError::NonFiniteConfounder { index });
        }
        let n1 = records.iter().filter(|r| r.exposure).count();
        let n0 = records.len() - n1;
        Ok(Self { records, n0, n1 })
    }

    pub fn records(&self) -> &[ObservationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn group_count(&self, group: Group) -> usize {
        match group {
            Group::Unexposed => self.n0,
            Group::Exposed => self.n1,
        }
    }

    /// Observed share `n_a / n`.
    pub fn share(&self, group: Group) -> f64 {
        self.group_count(group) as f64 / self.len() as f64
    }

    /// Errors unless both exposure groups are non-empty.
    pub fn require_both_groups(&self) -> Result<(), DataError> {
        for g in Group::BOTH {
            if self.group_count(g) == 0 {
                return Err(DataError::EmptyGroup(g));
            }
        }
        Ok(())
    }

    /// Copy of the dataset in canonical record order. Estimation runs on this
    /// order so that shuffled inputs give bit-identical results.
    pub fn canonical(&self) -> Dataset {
        let mut records = self.records.clone();
        records.sort_by_key(ObservationRecord::canonical_key);
        Dataset {
            records,
            n0: self.n0,
            n1: self.n1,
        }
    }
}

/// A non-negative benefit index: finite and at least one, or infinite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum ExtendedIndex {
    Finite(f64),
    Infinite,
}

impl ExtendedIndex {
    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedIndex::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedIndex::Finite(v) => Some(v),
            ExtendedIndex::Infinite => None,
        }
    }

    /// Numeric view used inside the flat parameter vector.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtendedIndex::Finite(v) => v,
            ExtendedIndex::Infinite => f64::INFINITY,
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtendedIndex::Infinite
        } else {
            ExtendedIndex::Finite(v)
        }
    }
}

impl fmt::Display for ExtendedIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedIndex::Finite(v) => match f.precision() {
                Some(p) => write!(f, "{:.*}", p, v),
                None => write!(f, "{}", v),
            },
            ExtendedIndex::Infinite => f.write_str("inf"),
        }
    }
}

/// Maps a benefit probability to its person-count index: `1/p` when `p > 0`,
/// infinite otherwise.
pub fn g_transform(p: f64) -> ExtendedIndex {
    if p > 0.0 {
        ExtendedIndex::Finite(1.0 / p)
    } else {
        ExtendedIndex::Infinite
    }
}

/// Causal pathway an effect or index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pathway {
    Indirect,
    Direct,
    Total,
}

/// Population an effect is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Group(Group),
    Marginal,
}

impl Pathway {
    pub const ALL: [Pathway; 3] = [Pathway::Indirect, Pathway::Direct, Pathway::Total];

    pub fn name(self) -> &'static str {
        match self {
            Pathway::Indirect => "indirect",
            Pathway::Direct => "direct",
            Pathway::Total => "total",
        }
    }
}

impl Scope {
    pub const ALL: [Scope; 3] = [
        Scope::Group(Group::Unexposed),
        Scope::Group(Group::Exposed),
        Scope::Marginal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scope::Group(Group::Unexposed) => "unexposed",
            Scope::Group(Group::Exposed) => "exposed",
            Scope::Marginal => "marginal",
        }
    }
}

/// The nine path-specific indices, in parameter-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndexKind {
    Inne,
    Iein,
    Innt,
    Dnne,
    Dein,
    Dnnt,
    Nne,
    Ein,
    Nnt,
}

impl IndexKind {
    pub const ALL: [IndexKind; 9] = [
        IndexKind::Inne,
        IndexKind::Iein,
        IndexKind::Innt,
        IndexKind::Dnne,
        IndexKind::Dein,
        IndexKind::Dnnt,
        IndexKind::Nne,
        IndexKind::Ein,
        IndexKind::Nnt,
    ];

    pub fn position(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Inne => "INNE",
            IndexKind::Iein => "IEIN",
            IndexKind::Innt => "INNT",
            IndexKind::Dnne => "DNNE",
            IndexKind::Dein => "DEIN",
            IndexKind::Dnnt => "DNNT",
            IndexKind::Nne => "NNE",
            IndexKind::Ein => "EIN",
            IndexKind::Nnt => "NNT",
        }
    }

    pub fn pathway(self) -> Pathway {
        match self.position() / 3 {
            0 => Pathway::Indirect,
            1 => Pathway::Direct,
            _ => Pathway::Total,
        }
    }

    pub fn scope(self) -> Scope {
        match self.position() % 3 {
            0 => Scope::Group(Group::Unexposed),
            1 => Scope::Group(Group::Exposed),
            _ => Scope::Marginal,
        }
    }

    /// Slot of this index in the flat parameter vector.
    pub fn slot(self) -> usize {
        StackLayout::INDICES.start + self.position()
    }

    pub fn from_name(name: &str) -> Option<Self> {
        IndexKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Block offsets of the stacked parameter (and estimating-function) vector.
///
/// | slots  | block |
/// |--------|-------|
/// | 0..4   | outcome coefficients (β0, βA, βM, βL) |
/// | 4..7   | mediator coefficients (γ0, γA, γL) |
/// | 7..13  | controlled contrasts: c10\|0, c10\|1, c01\|0, c01\|1, c11\|0, c11\|1 |
/// | 13..17 | mediator means: E[M1\|A=0], E[M1\|A=1], E[M0\|A=0], E[M0\|A=1] |
/// | 17..20 | indirect effects p_i(0), p_i(1), p_i |
/// | 20..23 | direct effects p_d(0), p_d(1), p_d |
/// | 23..32 | INNE, IEIN, INNT, DNNE, DEIN, DNNT, NNE, EIN, NNT |
///
/// `cXY|a` is the group-a mean of `ξ(X, Y, L) - ξ(0, Y', L)`; see
/// [`Contrast`].
pub struct StackLayout;

impl StackLayout {
    pub const DIM: usize = 32;
    pub const BETA: Range<usize> = 0..4;
    pub const GAMMA: Range<usize> = 4..7;
    pub const CONTRASTS: Range<usize> = 7..13;
    pub const MEDIATOR_MEANS: Range<usize> = 13..17;
    pub const P_INDIRECT: Range<usize> = 17..20;
    pub const P_DIRECT: Range<usize> = 20..23;
    pub const INDICES: Range<usize> = 23..32;

    /// Slots whose equations are always active (everything but the indices).
    pub const BASE: Range<usize> = 0..23;

    pub fn contrast(kind: Contrast, group: Group) -> usize {
        Self::CONTRASTS.start + 2 * kind as usize + group.index()
    }

    pub fn mediator_mean(level: MediatorLevel, group: Group) -> usize {
        Self::MEDIATOR_MEANS.start + 2 * level as usize + group.index()
    }

    pub fn effect(pathway: Pathway, scope: Scope) -> Option<usize> {
        let base = match pathway {
            Pathway::Indirect => Self::P_INDIRECT.start,
            Pathway::Direct => Self::P_DIRECT.start,
            Pathway::Total => return None,
        };
        Some(base + scope_offset(scope))
    }
}

fn scope_offset(scope: Scope) -> usize {
    match scope {
        Scope::Group(g) => g.index(),
        Scope::Marginal => 2,
    }
}

/// Controlled outcome contrasts held in the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contrast {
    /// `ξ(1,0,L) - ξ(0,0,L)`: exposure effect with the mediator at 0.
    ExposureAtM0 = 0,
    /// `ξ(0,1,L) - ξ(0,0,L)`: mediator effect without exposure.
    MediatorAtA0 = 1,
    /// `ξ(1,1,L) - ξ(0,1,L)`: exposure effect with the mediator at 1.
    ExposureAtM1 = 2,
}

/// Potential mediator `M_a` whose mean is held in the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediatorLevel {
    /// `E[M_1 | A = a] = mean of η(1, L)`.
    Exposed = 0,
    /// `E[M_0 | A = a] = mean of η(0, L)`.
    Unexposed = 1,
}

/// The full stacked estimand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterVector {
    pub beta: [f64; 4],
    pub gamma: [f64; 3],
    /// See [`StackLayout`] for the order.
    pub contrasts: [f64; 6],
    pub mediator_means: [f64; 4],
    /// p_i(0), p_i(1), p_i
    pub p_indirect: [f64; 3],
    /// p_d(0), p_d(1), p_d
    pub p_direct: [f64; 3],
    pub indices: [ExtendedIndex; 9],
}

impl Default for ParameterVector {
    fn default() -> Self {
        Self {
            beta: [0.0; 4],
            gamma: [0.0; 3],
            contrasts: [0.0; 6],
            mediator_means: [0.0; 4],
            p_indirect: [0.0; 3],
            p_direct: [0.0; 3],
            indices: [ExtendedIndex::Infinite; 9],
        }
    }
}

impl ParameterVector {
    /// Flattens into the stacked layout. Infinite indices become `+inf`.
    pub fn pack(&self) -> [f64; StackLayout::DIM] {
        let mut out = [0.0; StackLayout::DIM];
        out[StackLayout::BETA].copy_from_slice(&self.beta);
        out[StackLayout::GAMMA].copy_from_slice(&self.gamma);
        out[StackLayout::CONTRASTS].copy_from_slice(&self.contrasts);
        out[StackLayout::MEDIATOR_MEANS].copy_from_slice(&self.mediator_means);
        out[StackLayout::P_INDIRECT].copy_from_slice(&self.p_indirect);
        out[StackLayout::P_DIRECT].copy_from_slice(&self.p_direct);
        for (slot, idx) in out[StackLayout::INDICES].iter_mut().zip(self.indices) {
            *slot = idx.to_f64();
        }
        out
    }

    pub fn unpack(flat: &[f64]) -> Result<Self, LayoutError> {
        if flat.len() != StackLayout::DIM {
            return Err(LayoutError::Length(flat.len()));
        }
        let mut theta = ParameterVector::default();
        theta.beta.copy_from_slice(&flat[StackLayout::BETA]);
        theta.gamma.copy_from_slice(&flat[StackLayout::GAMMA]);
        theta
            .contrasts
            .copy_from_slice(&flat[StackLayout::CONTRASTS]);
        theta
            .mediator_means
            .copy_from_slice(&flat[StackLayout::MEDIATOR_MEANS]);
        theta
            .p_indirect
            .copy_from_slice(&flat[StackLayout::P_INDIRECT]);
        theta.p_direct.copy_from_slice(&flat[StackLayout::P_DIRECT]);
        for (idx, v) in theta.indices.iter_mut().zip(&flat[StackLayout::INDICES]) {
            *idx = ExtendedIndex::from_f64(*v);
        }
        Ok(theta)
    }

    pub fn contrast(&self, kind: Contrast, group: Group) -> f64 {
        self.contrasts[2 * kind as usize + group.index()]
    }

    pub fn mediator_mean(&self, level: MediatorLevel, group: Group) -> f64 {
        self.mediator_means[2 * level as usize + group.index()]
    }

    pub fn index(&self, kind: IndexKind) -> ExtendedIndex {
        self.indices[kind.position()]
    }

    /// Effect probability; totals are derived as direct + indirect.
    pub fn effect(&self, pathway: Pathway, scope: Scope) -> f64 {
        let k = scope_offset(scope);
        match pathway {
            Pathway::Indirect => self.p_indirect[k],
            Pathway::Direct => self.p_direct[k],
            Pathway::Total => self.p_indirect[k] + self.p_direct[k],
        }
    }

    /// The effect probability an index is the transform of.
    pub fn effect_for(&self, kind: IndexKind) -> f64 {
        self.effect(kind.pathway(), kind.scope())
    }
}
