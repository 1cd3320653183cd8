//! Drivers for the `verify` suites: each builds seeded instances,
//! runs the corresponding core operation and yields verdict records.

use anyhow::{anyhow, bail, Result};
use serde_json::json;
use sumprod_core::averages::{
    mult_avg_norm, pet_deviation, recurrence_average, return_time_set, shkredov_norm,
    vdc_identity_residual, GroupKind,
};
use sumprod_core::colouring::gs_lower_term;
use sumprod_core::field::{Field, Poly};
use sumprod_core::report::Verdict;
use sumprod_core::rng::child_seed;
use sumprod_core::space::{ratio, GridFn, ProductSet, Rational, SetRule, Subset};

#[derive(Clone, Copy, PartialEq, Eq, Debug, clap::ValueEnum)]
pub enum Suite {
    Vdc,
    Pet,
    #[value(name = "mult-avg")]
    MultAvg,
    Recurrence,
    #[value(name = "return-set")]
    ReturnSet,
    #[value(name = "shkredov-norm")]
    ShkredovNorm,
    #[value(name = "gs-term")]
    GsTerm,
}

/// δ values for the return-set suite: `half` (μ(B)/2), `num/den`, or a
/// bare integer numerator over |F|.
#[derive(Clone, Debug)]
pub enum DeltaSpec {
    Half,
    Exact(Rational),
}

impl DeltaSpec {
    pub fn parse(text: &str) -> Result<DeltaSpec> {
        if text == "half" {
            return Ok(DeltaSpec::Half);
        }
        if let Some((n, d)) = text.split_once('/') {
            return Ok(DeltaSpec::Exact(ratio(
                n.trim().parse()?,
                d.trim().parse()?,
            )));
        }
        Ok(DeltaSpec::Exact(ratio(text.trim().parse()?, 1)))
    }

    fn resolve(&self, b: &Subset) -> Rational {
        match self {
            DeltaSpec::Half => ratio(b.size(), 2 * b.order() as u64),
            DeltaSpec::Exact(r) => r.clone(),
        }
    }

    pub fn literal(&self) -> String {
        match self {
            DeltaSpec::Half => "half".into(),
            DeltaSpec::Exact(r) => format!("{}/{}", r.numer(), r.denom()),
        }
    }
}

pub struct SuiteConfig {
    pub field: Field,
    pub poly: Option<Poly>,
    pub count: u32,
    pub seed: u64,
    pub set: SetRule,
    pub set2: SetRule,
    pub delta: DeltaSpec,
    pub m: u32,
}

fn set_inputs(rule: &SetRule, seed: u64, set: &Subset) -> serde_json::Value {
    json!({"rule": rule.literal(), "seed": seed, "size": set.size()})
}

fn need_poly(cfg: &SuiteConfig) -> Result<&Poly> {
    cfg.poly
        .as_ref()
        .ok_or_else(|| anyhow!("this suite needs --poly c0,c1,..."))
}

/// A nonempty draw; empty sets make the measure hypotheses vacuous in
/// a degenerate way, so the drawer retries deterministically.
fn nonempty(rule: &SetRule, field: &Field, seed: u64) -> Result<(Subset, u64)> {
    for attempt in 0.. {
        let s = child_seed(seed, attempt);
        let set = rule.build(field, s)?;
        if !set.is_empty() {
            return Ok((set, s));
        }
        if attempt > 1000 {
            break;
        }
    }
    bail!("set rule keeps producing empty sets")
}

fn star_subset(rule: &SetRule, field: &Field, seed: u64) -> Result<(Subset, u64)> {
    for attempt in 0.. {
        let s = child_seed(seed, attempt);
        let mut set = rule.build(field, s)?;
        set.remove(0);
        if !set.is_empty() {
            return Ok((set, s));
        }
        if attempt > 1000 {
            break;
        }
    }
    bail!("set rule keeps producing empty sets inside F*")
}

pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<Vec<Verdict>> {
    match suite {
        Suite::Vdc => vdc_suite(cfg),
        Suite::Pet => pet_suite(cfg),
        Suite::MultAvg => mult_avg_suite(cfg),
        Suite::Recurrence => recurrence_suite(cfg),
        Suite::ReturnSet => return_set_suite(cfg),
        Suite::ShkredovNorm => shkredov_suite(cfg),
        Suite::GsTerm => gs_term_suite(cfg),
    }
}

fn vdc_suite(cfg: &SuiteConfig) -> Result<Vec<Verdict>> {
    let f = &cfg.field;
    let mut out = Vec::new();
    for group in [GroupKind::Additive, GroupKind::Multiplicative] {
        for i in 0..cfg.count {
            let fam_seed = child_seed(cfg.seed, (group as u64) << 32 | i as u64);
            let fam: Vec<GridFn> = (0..group.size(f))
                .map(|j| {
                    GridFn::random(f, 1, child_seed(fam_seed, j as u64), |rng| rng.next_sign())
                })
                .collect::<Result<_, _>>()?;
            let check = vdc_identity_residual(f, group, &fam)?;
            out.push(
                Verdict::identity(
                    &format!("vdc-identity/{}", group.label()),
                    &f.literal(),
                    check.lhs,
                    check.rhs,
                    check.scale,
                )
                .with_inputs(json!({
                    "group": group.label(),
                    "family": "random-signs",
                    "relative_residual": check.relative_residual(),
                }))
                .with_seed(fam_seed),
            );
        }
    }
    Ok(out)
}

fn pet_suite(cfg: &SuiteConfig) -> Result<Vec<Verdict>> {
    let f = &cfg.field;
    let poly = need_poly(cfg)?;
    let mut out = Vec::new();
    for i in 0..cfg.count {
        let s = child_seed(cfg.seed, i as u64);
        let set = cfg.set.build(f, s)?;
        let dev = pet_deviation(f, poly, &GridFn::indicator(&set))?;
        out.push(
            Verdict::upper_bound("pet-deviation", &f.literal(), dev.lhs, dev.proof_bound)
                .with_logged(dev.stated_bound)
                .with_inputs(json!({
                    "poly": poly.literal(),
                    "set": set_inputs(&cfg.set, s, &set),
                    "ftilde_norm2sq": dev.ftilde_norm2sq,
                }))
                .with_seed(s),
        );
    }
    Ok(out)
}

fn mult_avg_suite(cfg: &SuiteConfig) -> Result<Vec<Verdict>> {
    let f = &cfg.field;
    let poly = need_poly(cfg)?;
    let mut out = Vec::new();
    for i in 0..cfg.count {
        let s = child_seed(cfg.seed, i as u64);
        let set = cfg.set.build(f, s)?;
        let res = mult_avg_norm(f, poly, &set)?;
        out.push(
            Verdict::upper_bound("mult-avg-norm", &f.literal(), res.normsq, res.bound)
                .with_inputs(json!({
                    "poly": poly.literal(),
                    "set": set_inputs(&cfg.set, s, &set),
                }))
                .with_seed(s),
        );
    }
    Ok(out)
}

fn recurrence_suite(cfg: &SuiteConfig) -> Result<Vec<Verdict>> {
    let f = &cfg.field;
    let poly = need_poly(cfg)?;
    let mut out = Vec::new();
    for i in 0..cfg.count {
        let inst = child_seed(cfg.seed, i as u64);
        let (b, sb) = nonempty(&cfg.set, f, child_seed(inst, 0))?;
        let (c, sc) = nonempty(&cfg.set2, f, child_seed(inst, 1))?;
        let bp = ProductSet::line(b.clone());
        let cp = ProductSet::line(c.clone());

        let same = recurrence_average(f, poly, &bp, &bp, true)?;
        out.push(
            Verdict::lower_bound(
                "recurrence/same-set",
                &f.literal(),
                same.avg,
                same.bound_same_set.expect("same-set bound"),
            )
            .with_vacuous(same.vacuous)
            .with_inputs(json!({
                "poly": poly.literal(),
                "B": set_inputs(&cfg.set, sb, &b),
            }))
            .with_seed(inst),
        );

        let two = recurrence_average(f, poly, &bp, &cp, false)?;
        out.push(
            Verdict::lower_bound(
                "recurrence/two-set",
                &f.literal(),
                two.avg,
                two.bound_ergodic.expect("line bound"),
            )
            .with_vacuous(two.vacuous)
            .with_inputs(json!({
                "poly": poly.literal(),
                "B": set_inputs(&cfg.set, sb, &b),
                "C": set_inputs(&cfg.set2, sc, &c),
            }))
            .with_seed(inst),
        );
    }
    Ok(out)
}

fn return_set_suite(cfg: &SuiteConfig) -> Result<Vec<Verdict>> {
    let f = &cfg.field;
    let poly = need_poly(cfg)?;
    let star = (f.order() - 1) as f64;
    let mut out = Vec::new();
    for i in 0..cfg.count {
        let inst = child_seed(cfg.seed, i as u64);
        let (b, sb) = nonempty(&cfg.set, f, child_seed(inst, 0))?;
        let delta = cfg.delta.resolve(&b);
        let bp = ProductSet::line(b.clone());
        let rt = return_time_set(f, poly, &bp, &bp, &delta)?;
        out.push(
            Verdict::lower_bound(
                "return-times/same-set",
                &f.literal(),
                rt.d.size() as f64 / star,
                rt.lower_bound,
            )
            .with_vacuous(rt.vacuous)
            .with_inputs(json!({
                "poly": poly.literal(),
                "B": set_inputs(&cfg.set, sb, &b),
                "delta": format!("{}/{}", delta.numer(), delta.denom()),
                "d_size": rt.d.size(),
            }))
            .with_seed(inst),
        );

        // Two-set variant needs δ below both measures.
        let mut partner = None;
        for a in 0..1000u64 {
            let (c, sc) = nonempty(&cfg.set2, f, child_seed(inst, 1 + a))?;
            if ratio(c.size(), f.order()) > delta {
                partner = Some((c, sc));
                break;
            }
        }
        let Some((c, sc)) = partner else {
            bail!(
                "no partner set with measure above delta under {}",
                cfg.set2.literal()
            )
        };
        let cp = ProductSet::line(c.clone());
        let rt = return_time_set(f, poly, &bp, &cp, &delta)?;
        out.push(
            Verdict::lower_bound(
                "return-times/two-set",
                &f.literal(),
                rt.d.size() as f64 / star,
                rt.lower_bound,
            )
            .with_vacuous(rt.vacuous)
            .with_inputs(json!({
                "poly": poly.literal(),
                "B": set_inputs(&cfg.set, sb, &b),
                "C": set_inputs(&cfg.set2, sc, &c),
                "delta": format!("{}/{}", delta.numer(), delta.denom()),
                "d_size": rt.d.size(),
            }))
            .with_seed(inst),
        );
    }
    Ok(out)
}

fn shkredov_suite(cfg: &SuiteConfig) -> Result<Vec<Verdict>> {
    let f = &cfg.field;
    let mut out = Vec::new();
    for i in 0..cfg.count {
        let inst = child_seed(cfg.seed, i as u64);
        // The twisted-norm statement lives on subsets of F*; draws
        // drop 0 membership.
        let (b, sb) = star_subset(&cfg.set, f, child_seed(inst, 0))?;
        let (c, sc) = star_subset(&cfg.set2, f, child_seed(inst, 1))?;
        let res = shkredov_norm(f, &b, &c)?;
        let inputs = json!({
            "B": set_inputs(&cfg.set, sb, &b),
            "C": set_inputs(&cfg.set2, sc, &c),
        });
        out.push(
            Verdict::upper_bound("shkredov-norm", &f.literal(), res.normsq, res.proof_bound)
                .with_logged(res.stated_bound)
                .with_inputs(inputs.clone())
                .with_seed(inst),
        );
        if let Some(diag) = res.inner_diag {
            out.push(
                Verdict::upper_bound(
                    "shkredov-inner-diag",
                    &f.literal(),
                    diag,
                    res.inner_diag_bound,
                )
                .with_inputs(inputs)
                .with_seed(inst),
            );
        }
    }
    Ok(out)
}

fn gs_term_suite(cfg: &SuiteConfig) -> Result<Vec<Verdict>> {
    let f = &cfg.field;
    let mut out = Vec::new();
    for i in 0..cfg.count {
        let inst = child_seed(cfg.seed, i as u64);
        let factors: Vec<Subset> = (0..cfg.m)
            .map(|j| cfg.set.build(f, child_seed(inst, j as u64)))
            .collect::<Result<_, _>>()?;
        let b = ProductSet::new(factors);
        let res = gs_lower_term(f, &b)?;
        let lhs = sumprod_core::space::rational_to_f64(&res.value);
        let rhs = sumprod_core::space::rational_to_f64(&res.floor);
        out.push(
            Verdict::decided("gs-lower-term", &f.literal(), lhs, rhs, res.holds)
                .with_inputs(json!({
                    "m": cfg.m,
                    "rule": cfg.set.literal(),
                    "sizes": b.sizes(),
                    "value": format!("{}/{}", res.value.numer(), res.value.denom()),
                    "floor": format!("{}/{}", res.floor.numer(), res.floor.denom()),
                }))
                .with_seed(inst),
        );
    }
    Ok(out)
}
