//! Latent-space removal and forgery by ℓ∞-bounded pixel perturbations.
//!
//! Both attacks run sign-gradient steps on `‖encode(x') − target‖²`:
//! removal ascends away from the image's own latent, forgery descends
//! toward the latent of a watermarked reference. After every step the
//! iterate is projected onto `‖x' − x‖∞ ≤ c` and `[0, 1]`. Removal starts
//! from a uniform random point of the budget ball because the loss gradient
//! vanishes at the origin. Checkpoints (the start and every
//! `verify_every` steps, plus the last step) are scored by the optional
//! verifier; the returned image is the checkpoint with the weakest (removal)
//! or strongest (forgery) detection, or the most extreme loss when no
//! verifier is given.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attacks::budget::{project, sign, OptBudget, Trace, TraceRow};
use crate::error::Result;
use crate::image::Image;
use crate::latent::Latent;
use crate::metrics::psnr;
use crate::stats::DetectionReport;
use crate::vae::EncoderProfile;

pub type Verifier<'a> = &'a dyn Fn(&Image) -> Result<DetectionReport>;

#[derive(Debug, Clone)]
pub struct OptOutcome {
    pub image: Image,
    pub trace: Trace,
    pub best_step: usize,
    pub best_report: Option<DetectionReport>,
}

#[derive(Clone, Copy, PartialEq)]
enum Goal {
    Removal,
    Forgery,
}

struct Checkpoint {
    step: usize,
    image: Image,
    loss: f64,
    report: Option<DetectionReport>,
}

impl Goal {
    /// Whether `cand` should replace `best`.
    fn better(self, cand: &Checkpoint, best: &Checkpoint) -> bool {
        let (a, b) = match (&cand.report, &best.report) {
            (Some(x), Some(y)) => (x.p, y.p),
            _ => (-cand.loss, -best.loss),
        };
        match self {
            Goal::Removal => a > b,
            Goal::Forgery => a < b,
        }
    }
}

fn loss_and_grad(profile: &EncoderProfile, x: &Image, target: &Latent) -> Result<(f64, Image)> {
    let mut r = profile.encode(x)?;
    r.sub_assign(target)?;
    let loss = r.squared_norm();
    r.data_mut().iter_mut().for_each(|v| *v *= 2.0);
    Ok((loss, profile.encode_pullback(x, &r)?))
}

fn run(
    origin: &Image,
    start: Image,
    target: &Latent,
    profile: &EncoderProfile,
    budget: &OptBudget,
    verifier: Option<Verifier<'_>>,
    goal: Goal,
) -> Result<OptOutcome> {
    budget.validate()?;
    let dir = if goal == Goal::Removal { 1.0 } else { -1.0 };
    let mut trace = Trace::default();
    let mut x = start;
    project(origin, &mut x, budget.c);
    trace.check(origin, &x, budget.c);

    let record = |step: usize, x: &Image, trace: &mut Trace| -> Result<Checkpoint> {
        let mut r = profile.encode(x)?;
        r.sub_assign(target)?;
        let loss = r.squared_norm();
        let report = verifier.map(|v| v(x)).transpose()?;
        trace.rows.push(TraceRow {
            step,
            loss,
            z: report.as_ref().map(|r| r.z),
            p: report.as_ref().map(|r| r.p),
            psnr: psnr(origin, x)?,
            linf: origin.linf_distance(x)?,
        });
        Ok(Checkpoint {
            step,
            image: x.clone(),
            loss,
            report,
        })
    };

    let mut best = record(0, &x, &mut trace)?;
    for step in 1..=budget.steps {
        let (_, grad) = loss_and_grad(profile, &x, target)?;
        for (v, g) in x.data_mut().iter_mut().zip(grad.data()) {
            *v += dir * budget.alpha * sign(*g);
        }
        project(origin, &mut x, budget.c);
        trace.check(origin, &x, budget.c);
        if step % budget.verify_every == 0 || step == budget.steps {
            let cp = record(step, &x, &mut trace)?;
            if goal.better(&cp, &best) {
                best = cp;
            }
        }
    }
    Ok(OptOutcome {
        image: best.image,
        trace,
        best_step: best.step,
        best_report: best.report,
    })
}

/// Pushes the latent of `image` away from its starting value.
pub fn latentopt_removal(
    image: &Image,
    profile: &EncoderProfile,
    budget: &OptBudget,
    verifier: Option<Verifier<'_>>,
) -> Result<OptOutcome> {
    let target = profile.encode(image)?;
    let mut rng = ChaCha8Rng::seed_from_u64(budget.init_seed);
    let mut start = image.clone();
    if budget.c > 0.0 {
        for v in start.data_mut() {
            *v += rng.random_range(-budget.c..=budget.c);
        }
    }
    run(image, start, &target, profile, budget, verifier, Goal::Removal)
}

/// Pulls the latent of `cover` toward the latent of `reference`.
pub fn latentopt_forgery(
    cover: &Image,
    reference: &Image,
    profile: &EncoderProfile,
    budget: &OptBudget,
    verifier: Option<Verifier<'_>>,
) -> Result<OptOutcome> {
    let target = profile.encode(reference)?;
    run(cover, cover.clone(), &target, profile, budget, verifier, Goal::Forgery)
}
