//! Browser bindings for the interactive demo page: flow portraits, action
//! curves and classification tables of the model systems. All results are
//! returned as JSON strings for a framework-free page.

use num_complex::Complex64;
use toricsym::action::{action_function, find_periodic_orbit};
use toricsym::classify::classify;
use toricsym::dynamics::{integrate_flow, HamiltonianFlow};
use toricsym::resonance::canonical_invariants;
use toricsym::zoo::{zoo, ZooParams};
use wasm_bindgen::prelude::*;

fn params(s: u32, l: i64, p: i64, q: i64, minus: bool) -> ZooParams {
    ZooParams { s, l, p, q, a: 1.0, plus_sign: !minus, quadratic_alpha: false }
}

fn err_json(msg: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": format!("{msg}") }).to_string()
}

/// Classification table of a zoo entry, as JSON.
#[wasm_bindgen]
pub fn classify_entry(name: &str, s: u32, l: i64, p: i64, q: i64, minus: bool) -> String {
    let entry = match zoo(name, &params(s, l, p, q, minus)) {
        Ok(e) => e,
        Err(e) => return err_json(e),
    };
    let Some(family) = entry.linear_family.as_ref() else {
        return err_json("entry has no classification data");
    };
    let report = match classify(family) {
        Ok(r) => r,
        Err(e) => return err_json(e),
    };
    let canonical = match canonical_invariants(&report) {
        Ok(c) => c,
        Err(e) => return err_json(e),
    };
    serde_json::json!({
        "name": entry.name,
        "n": report.n,
        "rank": report.rank,
        "kappa_e": report.kappa_e,
        "kappa_h": report.kappa_h,
        "williamson": [report.williamson.0, report.williamson.1, report.williamson.2],
        "elliptic": canonical.elliptic,
        "hyperbolic": canonical.hyperbolic,
        "twisting": canonical.twisting.iter().map(|row| {
            row.iter().map(|f| format!("{f}")).collect::<Vec<_>>()
        }).collect::<Vec<_>>(),
        "residual": report.max_residual,
    })
    .to_string()
}

/// Hamiltonian flow trajectory of a basic model from a start point, as a
/// JSON polyline in the first two phase coordinates plus the energy drift.
#[wasm_bindgen]
pub fn flow_trajectory(name: &str, x0: f64, y0: f64, t_final: f64, imaginary_time: bool) -> String {
    let entry = match zoo(name, &ZooParams::default()) {
        Ok(e) => e,
        Err(e) => return err_json(e),
    };
    let mut system = entry.system.clone();
    let d = system.space.dim();
    let n = system.n();
    let mut coef = vec![Complex64::new(0.0, 0.0); n];
    coef[0] = if imaginary_time {
        system.complexified = true;
        Complex64::new(0.0, 1.0)
    } else {
        Complex64::new(1.0, 0.0)
    };
    let mut start = vec![Complex64::new(0.0, 0.0); d];
    start[0] = Complex64::new(x0, 0.0);
    start[1.min(d - 1)] = Complex64::new(y0, 0.0);
    let flow = match HamiltonianFlow::new(&system, coef) {
        Ok(f) => f,
        Err(e) => return err_json(e),
    };
    match integrate_flow(&flow, &start, t_final, 1e-10, None) {
        Ok(traj) => {
            let xs: Vec<f64> = traj.states.iter().map(|s| s[0].re).collect();
            let ys: Vec<f64> = traj.states.iter().map(|s| s[1.min(d - 1)].re).collect();
            let xs_im: Vec<f64> = traj.states.iter().map(|s| s[0].im).collect();
            serde_json::json!({
                "t": traj.times,
                "x": xs,
                "y": ys,
                "x_im": xs_im,
                "energy_drift": traj.energy_drift,
                "closure": traj.closure_residual(),
            })
            .to_string()
        }
        Err(e) => err_json(e),
    }
}

/// Action function I(z) of a basic model over [0, z_max], as JSON arrays.
#[wasm_bindgen]
pub fn action_curve(name: &str, z_max: f64, points: usize, component: usize) -> String {
    let entry = match zoo(name, &ZooParams::default()) {
        Ok(e) => e,
        Err(e) => return err_json(e),
    };
    let Some(defaults) = entry.action_defaults.get(component) else {
        return err_json("no action seed for this entry/component");
    };
    let mut system = entry.system.clone();
    system.complexified = defaults.complexified;
    let npts = points.clamp(3, 64);
    let grid: Vec<Vec<f64>> = (0..npts)
        .map(|k| {
            let t = z_max * k as f64 / (npts - 1) as f64;
            defaults.grid_direction.iter().map(|d| d * t).collect()
        })
        .collect();
    let orbit = match find_periodic_orbit(&system, &defaults.m1, &defaults.coefficients, 1e-10) {
        Ok(o) => o,
        Err(e) => return err_json(e),
    };
    match action_function(&system, &orbit, &grid, &Default::default()) {
        Ok(sample) => {
            let z: Vec<f64> = (0..npts).map(|k| z_max * k as f64 / (npts - 1) as f64).collect();
            serde_json::json!({
                "label": defaults.label,
                "z": z,
                "I_re": sample.values.iter().map(|v| v.re).collect::<Vec<_>>(),
                "I_im": sample.values.iter().map(|v| v.im).collect::<Vec<_>>(),
                "lambda_re": sample.lambda_hat.iter().map(|v| v.re).collect::<Vec<_>>(),
                "quad_remainder": sample.quad_remainder,
            })
            .to_string()
        }
        Err(e) => err_json(e),
    }
}

/// Entry names that have classification rows, for the demo dropdown.
#[wasm_bindgen]
pub fn demo_entries() -> String {
    serde_json::json!({
        "classify": [
            "elliptic-basic", "hyperbolic-basic", "focus-focus-basic",
            "parabolic-resonance", "hopf-resonance", "elliptic-parabolic-resonance",
            "swallowtail", "hyperbolic-hopf", "hyperbolic-parabolic-resonance",
        ],
        "flow": ["elliptic-basic", "hyperbolic-basic", "focus-focus-basic"],
        "action": ["elliptic-basic", "hyperbolic-basic", "focus-focus-basic"],
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_entry_round_trip() {
        let out = classify_entry("hopf-resonance", 5, 2, 1, 2, false);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["williamson"], serde_json::json!([2, 0, 0]));
        assert_eq!(v["elliptic"], serde_json::json!([[1, 2]]));
    }

    #[test]
    fn flow_trajectory_returns_polyline() {
        let out = flow_trajectory("elliptic-basic", 0.7, 0.0, 6.283185307, false);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v["x"].as_array().unwrap().len() > 10);
        assert!(v["closure"].as_f64().unwrap() < 1e-7);
    }

    #[test]
    fn action_curve_linear_for_elliptic() {
        let out = action_curve("elliptic-basic", 0.2, 9, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let z = v["z"].as_array().unwrap();
        let i_re = v["I_re"].as_array().unwrap();
        for (zk, ik) in z.iter().zip(i_re) {
            assert!((zk.as_f64().unwrap() - ik.as_f64().unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn errors_are_json() {
        let out = classify_entry("no-such-entry", 5, 2, 1, 2, false);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!(v["error"].is_string());
    }
}
