//! Output rendering: aligned tables, CSV with 17-significant-digit floats,
//! and JSON views.

use toricsym::action::{ActionSample, WitnessReport};
use toricsym::classify::ClassificationReport;
use toricsym::exact::Frac;
use toricsym::persist::PersistenceRow;
use toricsym::resonance::CanonicalInvariants;

pub fn f17(v: f64) -> String {
    format!("{v:.17e}")
}

fn ratio_tuple(row: &[i64]) -> String {
    let inner: Vec<String> = row.iter().map(|v| v.to_string()).collect();
    format!("({})", inner.join(":"))
}

fn frac_tuple(row: &[Frac]) -> String {
    let inner: Vec<String> = row.iter().map(|v| v.to_string()).collect();
    format!("({})", inner.join(", "))
}

pub fn classification_table(
    report: &ClassificationReport,
    canonical: &CanonicalInvariants,
) -> String {
    let mut out = String::new();
    let (ke, kh, kf) = report.williamson;
    out.push_str(&format!(
        "n = {}, rank r = {}, subtori (κe, κh) = ({}, {})\n",
        report.n, report.rank, report.kappa_e, report.kappa_h
    ));
    out.push_str(&format!("Williamson type (k_e, k_h, k_f) = ({ke}, {kh}, {kf})\n"));
    let fmt_rows = |rows: &Vec<Vec<i64>>| -> String {
        if rows.is_empty() {
            "no".to_string()
        } else {
            rows.iter().map(|r| ratio_tuple(r)).collect::<Vec<_>>().join(", ")
        }
    };
    out.push_str(&format!("elliptic resonances:   {}\n", fmt_rows(&canonical.elliptic)));
    out.push_str(&format!("hyperbolic resonances: {}\n", fmt_rows(&canonical.hyperbolic)));
    if canonical.twisting.is_empty() {
        out.push_str("twisting resonances:   none (rank 0)\n");
    } else {
        let rows: Vec<String> = canonical.twisting.iter().map(|r| frac_tuple(r)).collect();
        out.push_str(&format!("twisting resonances:   {}\n", rows.join(", ")));
    }
    out.push_str(&format!("spectral residual:     {:.3e}\n", report.max_residual));
    out
}

pub fn action_csv(sample: &ActionSample) -> String {
    let n = sample.grid.first().map_or(0, |g| g.len());
    let mut out = String::new();
    let mut header: Vec<String> = (0..n).map(|i| format!("z{}", i + 1)).collect();
    header.extend(["I_re".to_string(), "I_im".to_string(), "residual".to_string()]);
    out.push_str(&header.join(","));
    out.push('\n');
    for ((z, v), r) in sample.grid.iter().zip(&sample.values).zip(&sample.residuals) {
        let mut row: Vec<String> = z.iter().map(|&x| f17(x)).collect();
        row.push(f17(v.re));
        row.push(f17(v.im));
        row.push(f17(*r));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn action_json(sample: &ActionSample) -> Result<String, serde_json::Error> {
    let json = serde_json::json!({
        "grid": sample.grid,
        "values_re": sample.values.iter().map(|v| v.re).collect::<Vec<_>>(),
        "values_im": sample.values.iter().map(|v| v.im).collect::<Vec<_>>(),
        "residuals": sample.residuals,
        "lambda_hat_re": sample.lambda_hat.iter().map(|v| v.re).collect::<Vec<_>>(),
        "lambda_hat_im": sample.lambda_hat.iter().map(|v| v.im).collect::<Vec<_>>(),
        "quad_remainder": sample.quad_remainder,
    });
    Ok(serde_json::to_string_pretty(&json)? + "\n")
}

pub fn slope_of(rows: &[PersistenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.epsilon > 0.0 && r.max_action_error > 1e-14)
        .map(|r| (r.epsilon.ln(), r.max_action_error.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn persistence_csv(rows: &[PersistenceRow], slope: f64) -> String {
    let mut out = String::from("eps,max_action_error,loglog_slope\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", f17(r.epsilon), f17(r.max_action_error), f17(slope)));
    }
    out
}

pub fn persistence_table(rows: &[PersistenceRow], slope: f64) -> String {
    let mut out = String::from("      eps        max |I~ - I|\n");
    for r in rows {
        out.push_str(&format!("{:12.5e}  {:14.8e}\n", r.epsilon, r.max_action_error));
    }
    out.push_str(&format!("log-log slope: {slope:.4}\n"));
    out
}

pub fn witness_json(report: &WitnessReport) -> Result<String, serde_json::Error> {
    let json = serde_json::json!({
        "theta1_integral": report.theta1_integral,
        "loop_length": report.length,
        "tangency_residual": report.tangency_residual,
        "ball_condition": report.ball_condition,
        "verdict": report.verdict,
    });
    Ok(serde_json::to_string_pretty(&json)? + "\n")
}
