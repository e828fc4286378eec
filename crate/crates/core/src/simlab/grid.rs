use crate::error::{Error, Result};
use crate::numkernel::mix64;
use serde::Serialize;
use std::fmt;

pub const DELTAS: [f64; 5] = [0.0, 0.2, 0.5, 1.0, 2.0];
pub const TAU2S: [f64; 6] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5];
pub const KS: [usize; 3] = [5, 10, 30];
pub const EQUAL_NS: [u32; 8] = [20, 40, 100, 250, 30, 50, 60, 70];
pub const UNEQUAL_NBARS: [u32; 4] = [30, 60, 100, 160];
pub const QS: [f64; 2] = [0.5, 0.75];

/// Five study sizes averaging `n_bar`; K = 10 and K = 30 repeat them.
pub fn unequal_set(n_bar: u32) -> Option<[u32; 5]> {
    match n_bar {
        30 => Some([12, 16, 18, 20, 84]),
        60 => Some([24, 32, 36, 40, 168]),
        100 => Some([64, 72, 76, 80, 208]),
        160 => Some([124, 132, 136, 140, 268]),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SizePattern {
    Equal(u32),
    Unequal(u32),
}

impl SizePattern {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Equal(_) => "equal",
            Self::Unequal(_) => "unequal",
        }
    }

    /// n for equal sizes, n̄ for unequal ones.
    pub fn n(&self) -> u32 {
        match self {
            Self::Equal(n) | Self::Unequal(n) => *n,
        }
    }

    pub fn parse(label: &str, n: u32) -> Option<Self> {
        match label {
            "equal" => Some(Self::Equal(n)),
            "unequal" => Some(Self::Unequal(n)),
            _ => None,
        }
    }
}

impl fmt::Display for SizePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.label(), self.n())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimCell {
    pub delta: f64,
    pub tau2: f64,
    pub k: usize,
    pub pattern: SizePattern,
    pub q: f64,
    pub reps: usize,
    pub chunks: usize,
    pub seed: u64,
    pub level: f64,
}

impl SimCell {
    /// Stream key derived from the cell coordinates, so a cell draws the same
    /// numbers whichever grid it belongs to.
    pub fn stream_key(&self) -> u64 {
        let tag = match self.pattern {
            SizePattern::Equal(_) => 1u64,
            SizePattern::Unequal(_) => 2u64,
        };
        [
            self.delta.to_bits(),
            self.tau2.to_bits(),
            self.k as u64,
            tag,
            self.pattern.n() as u64,
            self.q.to_bits(),
        ]
        .into_iter()
        .fold(0x5EED_CE11u64, |h, v| mix64(h ^ v))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, detail: String| Err(Error::Invalid(format!("{field}: {detail}")));
        if !self.delta.is_finite() {
            return bad("delta", format!("{} is not finite", self.delta));
        }
        if !(self.tau2 >= 0.0) || !self.tau2.is_finite() {
            return bad(
                "tau2",
                format!("{} must be a finite nonnegative value", self.tau2),
            );
        }
        if self.k < 2 {
            return bad("k", format!("{} must be at least 2", self.k));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad("q", format!("{} must lie in (0, 1)", self.q));
        }
        if self.reps == 0 || self.chunks == 0 || !self.reps.is_multiple_of(self.chunks) {
            return bad(
                "reps",
                format!(
                    "{} must be a positive multiple of chunks = {}",
                    self.reps, self.chunks
                ),
            );
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level", format!("{} must lie in (0, 1)", self.level));
        }
        for (n_t, n_c) in study_sizes(self)? {
            if n_t < 2 || n_c < 2 || n_t + n_c < 5 {
                return bad(
                    "n",
                    format!("arm split ({n_t}, {n_c}) leaves an arm too small"),
                );
            }
        }
        Ok(())
    }
}

/// Arm split for a study of total size n: n_t = ⌈(1-q)n⌉, n_c = n - n_t.
pub fn split_arms(n: u32, q: f64) -> (u32, u32) {
    let n_t = ((1.0 - q) * n as f64 - 1e-9).ceil() as u32;
    (n_t, n.saturating_sub(n_t))
}

/// (n_t, n_c) of the K studies in a cell.
pub fn study_sizes(cell: &SimCell) -> Result<Vec<(u32, u32)>> {
    let totals: Vec<u32> = match cell.pattern {
        SizePattern::Equal(n) => vec![n; cell.k],
        SizePattern::Unequal(n_bar) => {
            let set = unequal_set(n_bar).ok_or_else(|| {
                Error::Invalid(format!("pattern: no unequal size set for n_bar = {n_bar}"))
            })?;
            if !cell.k.is_multiple_of(5) {
                return Err(Error::Invalid(format!(
                    "k: {} is not a multiple of 5, required for unequal sizes",
                    cell.k
                )));
            }
            set.iter().copied().cycle().take(cell.k).collect()
        }
    };
    Ok(totals.into_iter().map(|n| split_arms(n, cell.q)).collect())
}

/// Lists of levels to cross.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub deltas: Vec<f64>,
    pub tau2s: Vec<f64>,
    pub ks: Vec<usize>,
    pub equal_ns: Vec<u32>,
    pub unequal_nbars: Vec<u32>,
    pub qs: Vec<f64>,
    pub reps: usize,
    pub chunks: usize,
    pub seed: u64,
    pub level: f64,
    /// Admit levels outside the standard design.
    pub allow_custom: bool,
}

impl Default for GridConfig {
    /// The full design at desk-scale replication.
    fn default() -> Self {
        Self {
            deltas: DELTAS.to_vec(),
            tau2s: TAU2S.to_vec(),
            ks: KS.to_vec(),
            equal_ns: EQUAL_NS.to_vec(),
            unequal_nbars: UNEQUAL_NBARS.to_vec(),
            qs: QS.to_vec(),
            reps: 2000,
            chunks: 10,
            seed: 1,
            level: 0.95,
            allow_custom: false,
        }
    }
}

fn check_subset<T: PartialEq + fmt::Debug>(field: &str, values: &[T], allowed: &[T]) -> Result<()> {
    match values.iter().find(|v| !allowed.contains(v)) {
        Some(v) => Err(Error::Invalid(format!(
            "{field}: {v:?} is not one of the standard levels {allowed:?} (use --allow-custom)"
        ))),
        None => Ok(()),
    }
}

fn sorted_f64(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn sorted<T: Ord + Clone>(values: &[T]) -> Vec<T> {
    let mut v = values.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Cartesian product in (delta, tau2, k, pattern, q) order, each level ascending,
/// equal-size patterns before unequal ones.
pub fn expand_grid(config: &GridConfig) -> Result<Vec<SimCell>> {
    if !config.allow_custom {
        check_subset("delta", &config.deltas, &DELTAS)?;
        check_subset("tau2", &config.tau2s, &TAU2S)?;
        check_subset("k", &config.ks, &KS)?;
        check_subset("n", &config.equal_ns, &EQUAL_NS)?;
        check_subset("q", &config.qs, &QS)?;
    }
    check_subset("n_bar", &config.unequal_nbars, &UNEQUAL_NBARS)?;
    let patterns: Vec<SizePattern> = sorted(&config.equal_ns)
        .into_iter()
        .map(SizePattern::Equal)
        .chain(
            sorted(&config.unequal_nbars)
                .into_iter()
                .map(SizePattern::Unequal),
        )
        .collect();
    let fields: [(&str, usize); 5] = [
        ("delta", config.deltas.len()),
        ("tau2", config.tau2s.len()),
        ("k", config.ks.len()),
        ("n", patterns.len()),
        ("q", config.qs.len()),
    ];
    if let Some((field, _)) = fields.iter().find(|(_, len)| *len == 0) {
        return Err(Error::Invalid(format!("{field}: no levels given")));
    }
    let mut cells = Vec::new();
    for &delta in &sorted_f64(&config.deltas) {
        for &tau2 in &sorted_f64(&config.tau2s) {
            for &k in &sorted(&config.ks) {
                for &pattern in &patterns {
                    for &q in &sorted_f64(&config.qs) {
                        let cell = SimCell {
                            delta,
                            tau2,
                            k,
                            pattern,
                            q,
                            reps: config.reps,
                            chunks: config.chunks,
                            seed: config.seed,
                            level: config.level,
                        };
                        cell.validate()?;
                        cells.push(cell);
                    }
                }
            }
        }
    }
    Ok(cells)
}
