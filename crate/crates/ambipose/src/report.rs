//! Plot-ready CSV reports.

use std::fmt::Write as _;

use ambipose_core::graph::{OptimizeReport, StateVector};
use ambipose_core::liegroups::Pose;
use ambipose_core::metrics::PoseError;
use ambipose_core::pipeline::{Detection, Evaluation, FrontEnd, SweepRow};

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Long-format metric table. `row` is `frame` for one (frame, object) pair,
/// `object` for a per-object summary and `all` for the scene summary;
/// `estimate` is `raw` (single-view proposal) or `optimized`.
pub fn metrics_csv(eval: &Evaluation) -> String {
    let mut out = String::from("row,estimate,t,object,sigma_norm,valid_axes,add,add_s,mssd,mspd,auc,ar_mssd,ar_mspd,ar\n");
    let frame_row = |out: &mut String, name: &str, r: &ambipose_core::pipeline::ErrorRow, e: &PoseError| {
        let _ = writeln!(
            out,
            "frame,{name},{},{},{},{},{},{},{},{},,,,",
            r.t,
            r.object,
            opt(r.sigma_norm),
            r.valid_axes,
            e.add,
            e.add_s,
            e.mssd,
            e.mspd
        );
    };
    for r in &eval.rows {
        frame_row(&mut out, "raw", r, &r.raw);
        frame_row(&mut out, "optimized", r, &r.optimized);
    }
    for s in &eval.objects {
        for (name, auc, ar) in [("raw", s.auc_raw, &s.ar_raw), ("optimized", s.auc_optimized, &s.ar_optimized)] {
            let _ = writeln!(
                out,
                "object,{name},,{},,,,,,,{auc},{},{},{}",
                s.object, ar.ar_mssd, ar.ar_mspd, ar.ar_in_scope
            );
        }
    }
    for (name, ar) in [("raw", &eval.ar_raw), ("optimized", &eval.ar_optimized)] {
        let _ = writeln!(out, "all,{name},,,,,,,,,,{},{},{}", ar.ar_mssd, ar.ar_mspd, ar.ar_in_scope);
    }
    out
}

fn pose_cells(p: &Pose) -> String {
    p.to_array7().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Camera-from-object poses: the front-end outcome and raw proposal of every
/// (frame, object) pair, and the optimized estimate when `optimized` is given
/// and holds the object.
pub fn poses_csv(detections: &[Detection], optimized: Option<&StateVector>) -> String {
    let mut out = String::from("t,object,estimate,outcome,valid_axes,sigma_norm,qw,qx,qy,qz,tx,ty,tz\n");
    for d in detections {
        let outcome = match &d.outcome {
            FrontEnd::OutOfView => "out_of_view",
            FrontEnd::Rejected => "rejected",
            FrontEnd::PnpFailed(_) => "pnp_failed",
            FrontEnd::Accepted { icp_error: Some(_), .. } => "accepted_no_icp",
            FrontEnd::Accepted { .. } => "accepted",
        };
        let sigma = opt(d.proposal().map(|p| p.sigma_norm));
        match d.proposal() {
            Some(p) => {
                let _ = writeln!(out, "{},{},raw,{outcome},{},{sigma},{}", d.t, d.object, d.valid_axes(), pose_cells(&p.pose));
            }
            None => {
                let _ = writeln!(out, "{},{},raw,{outcome},{},,,,,,,,", d.t, d.object, d.valid_axes());
            }
        }
        if let Some(p) = optimized.and_then(|s| s.camera_from_object(d.t, d.object)) {
            let _ = writeln!(out, "{},{},optimized,{outcome},{},{sigma},{}", d.t, d.object, d.valid_axes(), pose_cells(&p));
        }
    }
    out
}

/// Cost before the first and after every accepted iteration.
pub fn cost_csv(report: &OptimizeReport) -> String {
    let mut out = String::from("iteration,cost\n");
    for (i, c) in report.costs.iter().enumerate() {
        let _ = writeln!(out, "{i},{c}");
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("sigma_o,accepted,ar_raw,ar_optimized\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.sigma_o, r.accepted, r.ar_raw, r.ar_optimized);
    }
    out
}
