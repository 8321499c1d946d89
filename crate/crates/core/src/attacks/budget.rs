//! ℓ∞ budgets, projection and optimization traces shared by the optimizers.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::image::Image;

/// Pixel-space ℓ∞ budget and step schedule for sign-gradient optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptBudget {
    /// Largest allowed per-sample change, `c`.
    pub c: f64,
    /// Step size `α`.
    pub alpha: f64,
    pub steps: usize,
    pub verify_every: usize,
    /// Seed of the random start inside the budget ball (removal only).
    pub init_seed: u64,
}

impl Default for OptBudget {
    fn default() -> Self {
        let c = 8.0 / 255.0;
        Self {
            c,
            alpha: c / 50.0,
            steps: 300,
            verify_every: 10,
            init_seed: 0,
        }
    }
}

impl OptBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(param("budget c must be nonnegative and finite"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(param("step size must be positive"));
        }
        if self.verify_every == 0 {
            return Err(param("verify_every must be positive"));
        }
        Ok(())
    }
}

/// One recorded optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub z: Option<f64>,
    pub p: Option<f64>,
    pub psnr: f64,
    pub linf: f64,
}

/// Rows plus the count of iterates that broke the budget or pixel range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub iterates_checked: usize,
    pub violations: usize,
}

impl Trace {
    pub(crate) fn check(&mut self, origin: &Image, x: &Image, c: f64) {
        self.iterates_checked += 1;
        if !within_budget(origin, x, c) {
            self.violations += 1;
        }
    }

    /// CSV with header `step,loss,z,p,psnr,linf`; missing values are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = String::from("step,loss,z,p,psnr,linf\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{},{},{:.6},{:e}\n",
                r.step,
                r.loss,
                opt(r.z),
                opt(r.p),
                r.psnr,
                r.linf
            ));
        }
        s
    }
}

/// `‖x − origin‖∞ ≤ c` and every sample of `x` in `[0, 1]`, exactly.
pub fn within_budget(origin: &Image, x: &Image, c: f64) -> bool {
    origin.same_shape(x)
        && origin
            .data()
            .iter()
            .zip(x.data())
            .all(|(&o, &v)| (0.0..=1.0).contains(&v) && (v - o).abs() <= c)
}

fn toward(v: f64, target: f64) -> f64 {
    let bits = v.to_bits();
    // nonnegative finite floats order like their bit patterns
    if v > target {
        f64::from_bits(bits - 1)
    } else {
        f64::from_bits(bits + 1)
    }
}

/// Nearest value to `v` inside `[o − c, o + c] ∩ [0, 1]`, with the distance
/// to `o` checked in floating point rather than trusted to the interval ends.
pub(crate) fn project_sample(o: f64, v: f64, c: f64) -> f64 {
    let lo = (o - c).max(0.0);
    let hi = (o + c).min(1.0);
    let mut y = v.clamp(lo.min(hi), hi.max(lo)).clamp(0.0, 1.0);
    while (y - o).abs() > c && y != o {
        y = toward(y, o);
    }
    y
}

pub(crate) fn project(origin: &Image, x: &mut Image, c: f64) {
    for (v, &o) in x.data_mut().iter_mut().zip(origin.data()) {
        *v = project_sample(o, *v, c);
    }
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
