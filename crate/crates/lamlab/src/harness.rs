//! Convergence experiments: build a field, interpolate, measure, repeat.
//!
//! One *case* takes a target set and a mesh size through the whole
//! pipeline — witness extraction, parameter selection, field construction,
//! interpolation, deviation measurement — and records everything needed to
//! reproduce the number. A *sweep* runs cases across mesh sizes (optionally
//! on several threads; results are ordered by input, not completion) and
//! feeds a log-log rate fit.
//!
//! Reports serialize to CSV and JSON. Both emitters take a `stable` flag
//! that zeroes the wall-clock column so that repeated runs of the same
//! sweep produce byte-identical artifacts; the measured times stay in the
//! in-memory reports.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::construct::{build_general, select_params, select_params_with_alpha};
use crate::fem::{bad_measure, interpolate, make_mesh, sup_grad_norm, Polygon};
use crate::lamhull::{extract_witness, BoxSet};
use crate::matgeom::DiagMatF;
use crate::{Error, Result};

/// Everything one case run produces. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub h: f64,
    pub alpha: f64,
    #[serde(rename = "L")]
    pub level: u32,
    pub k_list: Vec<u32>,
    #[serde(rename = "E_h")]
    pub e_h: f64,
    pub bound: f64,
    pub sup_grad: f64,
    pub card_sigma: usize,
    pub runtime_ms: u64,
}

/// Knobs for a case run; `Default` is the fully automatic pipeline.
#[derive(Debug, Clone)]
pub struct CaseOptions {
    /// Witness search depth cap.
    pub cap: u32,
    /// Override the cell-scale exponent (default `1/(1+L)`).
    pub alpha: Option<f64>,
    /// Override the strip counts. Overridden counts skip the growth
    /// validation: the caller takes responsibility for nesting.
    pub k_list: Option<Vec<u32>>,
    /// Per-entry deviation tolerance when classifying triangles.
    pub tol: f64,
}

impl Default for CaseOptions {
    fn default() -> Self {
        CaseOptions { cap: 12, alpha: None, k_list: None, tol: 1e-7 }
    }
}

/// Upper bound for the deviation measure of the constructed field's
/// interpolant at mesh size `h`, with unit constant: the boundary-layer
/// term `h^alpha`, the transition bands of each stage, and the
/// interpolation error of the finest strips. Stage `i ≥ 2` uses
/// `k_list[i-2]`; `k_list` must hold `level − 1` counts (none for
/// `level ≤ 1`).
pub fn theoretical_bound(level: u32, alpha: f64, k_list: &[u32], h: f64) -> Result<f64> {
    if k_list.len() + 1 < level.max(1) as usize {
        return Err(Error::Parameter(format!(
            "level {} needs {} strip counts for the bound, got {}",
            level,
            level - 1,
            k_list.len()
        )));
    }
    let ha = h.powf(alpha);
    let hi = h.powf(1.0 - alpha);
    Ok(match level {
        0 => 0.0,
        1 => ha + hi,
        2 => {
            let k = f64::from(k_list[0]);
            ha + 1.0 / k + k * hi
        }
        _ => {
            // pd(i): product of every other count downward from stage i
            // (k_i · k_{i-2} · …, stages < 2 contributing 1).
            let pd = |i: usize| -> f64 {
                let mut p = 1.0;
                let mut j = i;
                while j >= 2 {
                    p *= f64::from(k_list[j - 2]);
                    j -= 2;
                }
                p
            };
            let l = level as usize;
            let interp: f64 = (1..=l).map(pd).sum();
            let trans: f64 = (2..=l).map(|i| pd(i - 1) / pd(i)).sum();
            ha + hi * interp + trans
        }
    })
}

/// Run the full pipeline for one mesh size.
pub fn run_case(kset: &BoxSet, omega: &Polygon, h: f64, opts: &CaseOptions) -> Result<CaseReport> {
    let start = Instant::now();
    let tree = extract_witness(kset, opts.cap)?;
    tree.verify()?;
    let mut params = match opts.alpha {
        Some(a) => select_params_with_alpha(tree.level, h, &tree, a)?,
        None => select_params(tree.level, h, &tree)?,
    };
    if let Some(ks) = &opts.k_list {
        params.k_list = ks.clone();
        params.growth = 0.0;
        params.minimizers = Vec::new();
    }
    let field = build_general(&tree, &params, h, omega)?;
    let mesh = make_mesh(omega, h)?;
    let u = interpolate(&field, &mesh);
    let sigma: Vec<DiagMatF> = tree.unique_leaves().iter().map(|m| m.to_f64()).collect();
    let e_h = bad_measure(&u, &sigma, opts.tol);
    let bound = theoretical_bound(tree.level, params.alpha, &params.k_list, h)?;
    let sup_grad = sup_grad_norm(&u);
    Ok(CaseReport {
        h,
        alpha: params.alpha,
        level: tree.level,
        k_list: params.k_list,
        e_h,
        bound,
        sup_grad,
        card_sigma: sigma.len(),
        runtime_ms: start.elapsed().as_millis() as u64,
    })
}

/// Sweep results: one report per admissible mesh size, ordered by `h`
/// descending; the sizes that were skipped as inadmissible with the
/// reason; and the rate fit at the level's target rate `1/(1+L)`.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub reports: Vec<CaseReport>,
    pub skipped: Vec<(f64, String)>,
    pub fit: RateFit,
}

/// Run one case per mesh size, distributing them over `jobs` threads.
/// Inadmissible sizes are skipped (it is an error only if nothing remains);
/// any other failure aborts the sweep.
pub fn sweep(
    kset: &BoxSet,
    omega: &Polygon,
    h_list: &[f64],
    opts: &CaseOptions,
    jobs: usize,
) -> Result<SweepOutcome> {
    let jobs = jobs.max(1).min(h_list.len().max(1));
    let n = h_list.len();
    let mut merged: Vec<Option<Result<CaseReport>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|t| {
                s.spawn(move || {
                    let mut out = Vec::new();
                    let mut i = t;
                    while i < n {
                        out.push((i, run_case(kset, omega, h_list[i], opts)));
                        i += jobs;
                    }
                    out
                })
            })
            .collect();
        for handle in handles {
            for (i, r) in handle.join().expect("sweep worker panicked") {
                merged[i] = Some(r);
            }
        }
    });
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for (i, slot) in merged.into_iter().enumerate() {
        match slot.expect("every index was processed") {
            Ok(rep) => reports.push(rep),
            Err(Error::Admissibility(msg)) => skipped.push((h_list[i], msg)),
            Err(e) => return Err(e),
        }
    }
    if reports.is_empty() && !skipped.is_empty() {
        return Err(Error::Admissibility(
            "every requested mesh size was inadmissible for this case".into(),
        ));
    }
    reports.sort_by(|a, b| b.h.partial_cmp(&a.h).expect("mesh sizes are finite"));
    skipped.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("mesh sizes are finite"));
    let target_rate =
        reports.first().map_or(0.0, |r| 1.0 / (1.0 + f64::from(r.level)));
    let fit = fit_rate(&reports, target_rate);
    Ok(SweepOutcome { reports, skipped, fit })
}

/// Log-log rate fit of the deviation measures in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// Least-squares slope of `ln E` against `ln h`; `None` with fewer
    /// than three nonzero measurements.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// `exp(intercept)`: the fitted constant in `E ≈ C · h^slope`.
    pub fit_c: Option<f64>,
    /// Smallest constant with `E ≤ C · h^target_rate` across all points.
    pub envelope_c: f64,
    /// Number of exact-zero measurements excluded from the fit.
    pub excluded_zero: usize,
    pub target_rate: f64,
}

/// Ordinary least squares on `(ln h, ln E)` over the reports with `E > 0`.
pub fn fit_rate(reports: &[CaseReport], target_rate: f64) -> RateFit {
    let pts: Vec<(f64, f64)> =
        reports.iter().filter(|r| r.e_h > 0.0).map(|r| (r.h.ln(), r.e_h.ln())).collect();
    let excluded_zero = reports.len() - pts.len();
    let (slope, intercept, fit_c) = if pts.len() >= 3 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let b = sxy / sxx;
        let a = my - b * mx;
        (Some(b), Some(a), Some(a.exp()))
    } else {
        (None, None, None)
    };
    let envelope_c = reports
        .iter()
        .map(|r| r.e_h / r.h.powf(target_rate))
        .fold(0.0f64, f64::max);
    RateFit { slope, intercept, fit_c, envelope_c, excluded_zero, target_rate }
}

const CSV_HEADER: &str = "h,alpha,L,k_list,E_h,bound,sup_grad,card_sigma,runtime_ms";

fn join_k(k_list: &[u32]) -> String {
    k_list.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
}

/// Render reports as CSV (floats in shortest round-trip form, strip counts
/// semicolon-joined). With `stable`, the wall-clock column is zeroed so
/// identical sweeps give identical bytes.
pub fn emit_csv(reports: &[CaseReport], stable: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let ms = if stable { 0 } else { r.runtime_ms };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.h,
            r.alpha,
            r.level,
            join_k(&r.k_list),
            r.e_h,
            r.bound,
            r.sup_grad,
            r.card_sigma,
            ms
        ));
    }
    out
}

/// Render reports as a JSON array; `stable` as in [`emit_csv`].
pub fn emit_json(reports: &[CaseReport], stable: bool) -> String {
    let mut rs = reports.to_vec();
    if stable {
        for r in &mut rs {
            r.runtime_ms = 0;
        }
    }
    serde_json::to_string_pretty(&rs).expect("reports serialize infallibly")
}

/// Parse [`emit_csv`] output back into reports.
pub fn parse_csv(text: &str) -> Result<Vec<CaseReport>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Parameter(format!(
                "bad CSV header: expected {CSV_HEADER:?}, got {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            return Err(Error::Parameter(format!(
                "line {}: expected 9 columns, got {}",
                lineno + 2,
                cols.len()
            )));
        }
        fn field<T: std::str::FromStr>(name: &str, s: &str) -> Result<T> {
            s.parse().map_err(|_| {
                Error::Parameter(format!("bad value in column {name}: {s:?}"))
            })
        }
        let k_list = if cols[3].is_empty() {
            Vec::new()
        } else {
            cols[3]
                .split(';')
                .map(|s| field::<u32>("k_list", s))
                .collect::<Result<Vec<u32>>>()?
        };
        out.push(CaseReport {
            h: field("h", cols[0])?,
            alpha: field("alpha", cols[1])?,
            level: field("L", cols[2])?,
            k_list,
            e_h: field("E_h", cols[4])?,
            bound: field("bound", cols[5])?,
            sup_grad: field("sup_grad", cols[6])?,
            card_sigma: field("card_sigma", cols[7])?,
            runtime_ms: field("runtime_ms", cols[8])?,
        });
    }
    Ok(out)
}
