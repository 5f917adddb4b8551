//! q-scale functions `W`, `Z` and `Z̄` of the miner's surplus process.
//!
//! For a finite jump law the Laplace transform `1/(ψ(θ) - q)` inverts to a
//! finite alternating series. Writing `s = (μ+q)/c` and `r = μ/(μ+q)`,
//!
//! ```text
//! W(x) = 1/c          Σ_j (-r)^j Σ_{|i|=j} C(j; i) p^i  g(s (x - i·b), j)
//! Z(x) = 1 + q/(μ+q)  Σ_j (-r)^j Σ_{|i|=j} C(j; i) p^i  G(s (x - i·b), j)
//! Z̄(x) = x + qc/(μ+q)² Σ_j (-r)^j Σ_{|i|=j} C(j; i) p^i  Ḡ(s (x - i·b), j)
//! ```
//!
//! where `g(y, j) = e^y y^j / j!` for `y >= 0`, `G` its integral from 0 and
//! `Ḡ` the integral of `G`. Only compositions with `i·b <= x` contribute, so
//! the depth is bounded by `⌊x / b*⌋`.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::CompoundPoissonModel;

/// Depth up to which double precision with compensated summation is
/// trusted.
pub const DEFAULT_MAX_DEPTH: usize = 40;

const LN_FACTORIAL_TABLE: usize = 1024;

fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACTORIAL_TABLE + 1);
        let mut acc = CompensatedSum::default();
        t.push(0.0);
        for k in 1..=LN_FACTORIAL_TABLE {
            acc.add((k as f64).ln());
            t.push(acc.value());
        }
        t
    });
    if n <= LN_FACTORIAL_TABLE {
        table[n]
    } else {
        let mut acc = CompensatedSum::default();
        acc.add(table[LN_FACTORIAL_TABLE]);
        for k in LN_FACTORIAL_TABLE + 1..=n {
            acc.add((k as f64).ln());
        }
        acc.value()
    }
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, term: f64) {
        let t = self.sum + term;
        if self.sum.abs() >= term.abs() {
            self.compensation += (self.sum - t) + term;
        } else {
            self.compensation += (term - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        iter.into_iter().for_each(|t| acc.add(t));
        acc
    }
}

/// `g(x, j) = e^x x^j / j!` for `x >= 0`, zero for `x < 0`, with `g(0, 0) = 1`.
pub fn g_kernel(x: f64, j: usize) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if j == 0 {
        return x.exp();
    }
    if x == 0.0 {
        return 0.0;
    }
    (x + j as f64 * x.ln() - ln_factorial(j)).exp()
}

/// `G(x, j) = ∫_0^x e^y y^j / j! dy`, zero for `x <= 0`.
///
/// Uses the integration-by-parts form
/// `Σ_{i=0}^{j} (-1)^{j-i} g(x, i) + (-1)^{j+1}` where its terms grow
/// geometrically (x > 2(j+1)); otherwise the positive power series
/// `Σ_m x^{j+1+m} / ((j+1+m) m! j!)`, which has no cancellation.
pub fn g_integral_kernel(x: f64, j: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x > 2.0 * (j as f64 + 1.0) {
        g_integral_by_parts(x, j)
    } else {
        g_integral_series(x, j)
    }
}

fn g_integral_by_parts(x: f64, j: usize) -> f64 {
    let mut acc = CompensatedSum::default();
    for i in 0..=j {
        let sign = if (j - i).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc.add(sign * g_kernel(x, i));
    }
    acc.add(if j.is_multiple_of(2) { -1.0 } else { 1.0 });
    acc.value()
}

fn g_integral_series(x: f64, j: usize) -> f64 {
    let jf = j as f64;
    let mut term = ((jf + 1.0) * x.ln() - (jf + 1.0).ln() - ln_factorial(j)).exp();
    positive_series(term, |m| {
        let mf = m as f64;
        term *= x * (jf + 1.0 + mf) / ((mf + 1.0) * (jf + 2.0 + mf));
        term
    })
}

/// `Ḡ(x, j) = ∫_0^x G(y, j) dy`, zero for `x <= 0`.
///
/// Integration-by-parts form `Σ_{i=0}^{j} (-1)^{j-i} G(x, i) + (-1)^{j+1} x`
/// for x > 2(j+2); positive series
/// `Σ_m x^{j+2+m} / ((j+1+m)(j+2+m) m! j!)` otherwise.
pub fn g_double_integral_kernel(x: f64, j: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x > 2.0 * (j as f64 + 2.0) {
        g_double_integral_by_parts(x, j)
    } else {
        g_double_integral_series(x, j)
    }
}

fn g_double_integral_by_parts(x: f64, j: usize) -> f64 {
    let mut acc = CompensatedSum::default();
    for i in 0..=j {
        let sign = if (j - i).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc.add(sign * g_integral_kernel(x, i));
    }
    acc.add(if j.is_multiple_of(2) { -x } else { x });
    acc.value()
}

fn g_double_integral_series(x: f64, j: usize) -> f64 {
    let jf = j as f64;
    let mut term = ((jf + 2.0) * x.ln() - (jf + 1.0).ln() - (jf + 2.0).ln() - ln_factorial(j)).exp();
    positive_series(term, |m| {
        let mf = m as f64;
        term *= x * (jf + 1.0 + mf) / ((mf + 1.0) * (jf + 3.0 + mf));
        term
    })
}

// Sums a series of positive terms whose ratio eventually falls below 1.
fn positive_series(first: f64, mut next: impl FnMut(usize) -> f64) -> f64 {
    let mut acc = CompensatedSum::default();
    acc.add(first);
    let mut prev = first;
    for m in 0..100_000 {
        let t = next(m);
        acc.add(t);
        if t <= prev && t <= acc.value() * 1e-18 {
            break;
        }
        prev = t;
    }
    acc.value()
}

/// A composition of depth `j` over the active atoms, reduced to what the
/// series needs: its multinomial probability weight and lattice shift
/// `Σ i_k b_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composition {
    pub weight: f64,
    pub shift: f64,
}

/// A series value with the sum of absolute terms, so callers can bound the
/// rounding error by roughly `ε · magnitude`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub magnitude: f64,
}

/// Evaluates the q-scale functions of one model at one discount rate.
///
/// Composition tables are built on first use per depth and then shared;
/// the evaluator is `Sync`.
#[derive(Debug)]
pub struct ScaleEvaluator {
    model: CompoundPoissonModel,
    q: f64,
    max_depth: usize,
    phi_q: f64,
    // (μ+q)/c
    rate: f64,
    // ln(μ/(μ+q))
    ln_ratio: f64,
    ln_probs: Vec<f64>,
    compositions: Vec<OnceLock<Vec<Composition>>>,
}

impl ScaleEvaluator {
    pub fn new(model: CompoundPoissonModel, q: f64) -> Result<Self> {
        Self::with_max_depth(model, q, DEFAULT_MAX_DEPTH)
    }

    pub fn with_max_depth(model: CompoundPoissonModel, q: f64, max_depth: usize) -> Result<Self> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::invalid(format!("discount rate must be >= 0 (got {q})")));
        }
        let mu = model.total_intensity();
        let phi_q = model.phi_unchecked(q);
        let ln_probs = model.atoms().iter().map(|a| a.prob.ln()).collect();
        Ok(ScaleEvaluator {
            rate: (mu + q) / model.drift(),
            ln_ratio: (mu / (mu + q)).ln(),
            phi_q,
            ln_probs,
            compositions: (0..=max_depth).map(|_| OnceLock::new()).collect(),
            max_depth,
            model,
            q,
        })
    }

    pub fn model(&self) -> &CompoundPoissonModel {
        &self.model
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// `φ(q)` of the underlying model.
    pub fn phi_q(&self) -> f64 {
        self.phi_q
    }

    /// Series depth `⌊x / b*⌋` needed at `x`.
    pub fn required_depth(&self, x: f64) -> usize {
        if x <= 0.0 {
            0
        } else {
            (x / self.model.min_jump()).floor() as usize
        }
    }

    fn depth_for(&self, x: f64) -> Result<usize> {
        let required = self.required_depth(x);
        if required > self.max_depth {
            Err(Error::DepthExceeded {
                required,
                cap: self.max_depth,
                at: x,
            })
        } else {
            Ok(required)
        }
    }

    /// Compositions of depth `j`, sorted by ascending shift.
    pub fn compositions(&self, j: usize) -> Result<&[Composition]> {
        let cell = self.compositions.get(j).ok_or(Error::DepthExceeded {
            required: j,
            cap: self.max_depth,
            at: f64::NAN,
        })?;
        Ok(cell.get_or_init(|| self.enumerate(j)))
    }

    // Lexicographic enumeration of i_0 + … + i_{A-1} = j.
    fn enumerate(&self, j: usize) -> Vec<Composition> {
        let n = self.model.atoms().len();
        let ln_jf = ln_factorial(j);
        let mut out = Vec::new();
        let mut counts = vec![0usize; n];
        fn recurse(
            k: usize,
            remaining: usize,
            counts: &mut [usize],
            ev: &ScaleEvaluator,
            ln_jf: f64,
            out: &mut Vec<Composition>,
        ) {
            let n = counts.len();
            if k == n - 1 {
                counts[k] = remaining;
                let atoms = ev.model.atoms();
                let mut ln_w = ln_jf;
                let mut shift = CompensatedSum::default();
                for (i, &c) in counts.iter().enumerate() {
                    if c > 0 {
                        ln_w += c as f64 * ev.ln_probs[i] - ln_factorial(c);
                        shift.add(c as f64 * atoms[i].jump);
                    }
                }
                out.push(Composition {
                    weight: ln_w.exp(),
                    shift: shift.value(),
                });
                return;
            }
            for c in (0..=remaining).rev() {
                counts[k] = c;
                recurse(k + 1, remaining - c, counts, ev, ln_jf, out);
            }
        }
        recurse(0, j, &mut counts, self, ln_jf, &mut out);
        out.sort_by(|a, b| a.shift.total_cmp(&b.shift));
        out
    }

    // Σ_j (-r)^j Σ_comp weight · kernel(s (x - shift), j)
    fn series(&self, x: f64, kernel: impl Fn(f64, usize) -> f64) -> Result<SeriesValue> {
        let depth = self.depth_for(x)?;
        let mut acc = CompensatedSum::default();
        let mut magnitude = 0.0;
        for j in 0..=depth {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let ratio_pow = (j as f64 * self.ln_ratio).exp();
            for comp in self.compositions(j)? {
                if comp.shift > x {
                    break;
                }
                let k = kernel(self.rate * (x - comp.shift), j);
                if k == 0.0 {
                    continue;
                }
                let term = ratio_pow * comp.weight * k;
                magnitude += term.abs();
                acc.add(sign * term);
            }
        }
        Ok(SeriesValue {
            value: acc.value(),
            magnitude,
        })
    }

    /// `W^(q)(x)`; zero for `x < 0`, `1/c` at `x = 0`.
    pub fn w(&self, x: f64) -> Result<f64> {
        Ok(self.w_detailed(x)?.value)
    }

    pub fn w_detailed(&self, x: f64) -> Result<SeriesValue> {
        if x < 0.0 {
            return Ok(SeriesValue {
                value: 0.0,
                magnitude: 0.0,
            });
        }
        let c = self.model.drift();
        let s = self.series(x, g_kernel)?;
        Ok(SeriesValue {
            value: s.value / c,
            magnitude: s.magnitude / c,
        })
    }

    /// `Z^(q)(x) = 1 + q ∫_0^x W^(q)`; one for `x <= 0`.
    pub fn z(&self, x: f64) -> Result<f64> {
        Ok(self.z_detailed(x)?.value)
    }

    pub fn z_detailed(&self, x: f64) -> Result<SeriesValue> {
        if x <= 0.0 || self.q == 0.0 {
            self.depth_for(x)?;
            return Ok(SeriesValue {
                value: 1.0,
                magnitude: 1.0,
            });
        }
        let factor = self.q / (self.model.total_intensity() + self.q);
        let s = self.series(x, g_integral_kernel)?;
        Ok(SeriesValue {
            value: 1.0 + factor * s.value,
            magnitude: 1.0 + factor * s.magnitude,
        })
    }

    /// `Z̄^(q)(x) = ∫_0^x Z^(q)`; equal to `x` for `x <= 0`.
    pub fn z_bar(&self, x: f64) -> Result<f64> {
        Ok(self.z_bar_detailed(x)?.value)
    }

    pub fn z_bar_detailed(&self, x: f64) -> Result<SeriesValue> {
        if x <= 0.0 || self.q == 0.0 {
            self.depth_for(x)?;
            return Ok(SeriesValue {
                value: x,
                magnitude: x.abs(),
            });
        }
        let mu_q = self.model.total_intensity() + self.q;
        let factor = self.q * self.model.drift() / (mu_q * mu_q);
        let s = self.series(x, g_double_integral_kernel)?;
        Ok(SeriesValue {
            value: x + factor * s.value,
            magnitude: x + factor * s.magnitude,
        })
    }
}
