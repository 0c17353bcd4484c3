//! Trace files, particle checkpoints, convergence-slope fits and mixture
//! predictions.

use std::io::{Read, Write};

use crate::engine::TraceRow;
use crate::error::{Error, Result};
use crate::models::{Model, MixtureLogistic};
use crate::particles::ParticleSystem;

/// Float formatting shared by every CSV this crate writes (17 significant
/// digits, exact round trip).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "NaN" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.trim().parse().map_err(|e| Error::Data(format!("bad number {s:?}: {e}"))),
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

/// Column names of a trace with parameter dimension `d`.
pub fn trace_header(d: usize, with_error: bool) -> Vec<String> {
    let mut h: Vec<String> = ["t", "p", "xi", "eps", "q", "branch", "aux_estimate", "z"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if with_error {
        h.push("error".into());
    }
    for c in ["ess", "tau", "temper", "mincut_objective", "sigma_norm", "partition", "wall_ns_per_obs"] {
        h.push(c.into());
    }
    h.extend((1..=d).map(|i| format!("theta_{i}")));
    h
}

/// Append-only trace CSV writer.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    with_error: bool,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(w: W, d: usize, with_error: bool) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().from_writer(w);
        inner.write_record(trace_header(d, with_error)).map_err(csv_err)?;
        Ok(Self { inner, with_error })
    }

    pub fn write_row(&mut self, r: &TraceRow) -> Result<()> {
        let mut rec = vec![
            r.t.to_string(),
            r.p.to_string(),
            fmt_f64(r.xi),
            fmt_f64(r.eps),
            r.q.to_string(),
            r.branch.map(|b| b.as_str()).unwrap_or("").to_string(),
            r.aux_branch.map(|b| b.as_str()).unwrap_or("").to_string(),
            fmt_f64(r.z),
        ];
        if self.with_error {
            rec.push(r.error.map(fmt_f64).unwrap_or_default());
        }
        rec.extend([
            fmt_f64(r.ess),
            r.tau.to_string(),
            fmt_f64(r.temper),
            fmt_f64(r.mincut_objective),
            fmt_f64(r.sigma_norm),
            r.partition.clone(),
            fmt_f64(r.wall_ns_per_obs),
        ]);
        rec.extend(r.estimate.iter().map(|&v| fmt_f64(v)));
        self.inner.write_record(&rec).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::Data(e.to_string()))?;
        self.inner.into_inner().map_err(|e| Error::Data(e.to_string()))
    }
}

/// Writes a complete trace.
pub fn write_trace<W: Write>(w: W, rows: &[TraceRow], d: usize, with_error: bool) -> Result<W> {
    let mut tw = TraceWriter::new(w, d, with_error)?;
    for r in rows {
        tw.write_row(r)?;
    }
    tw.finish()
}

/// `(t, error)` pairs of a trace file; rows without an error value are skipped.
pub fn read_trace_errors<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("trace has no {name} column")))
    };
    let (ti, ei) = (col("t")?, col("error")?);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        let e = rec.get(ei).unwrap_or("");
        if e.is_empty() {
            continue;
        }
        out.push((parse_f64(rec.get(ti).unwrap_or(""))?, parse_f64(e)?));
    }
    Ok(out)
}

/// Least-squares fit of `log error` against `log t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Rows used by the fit.
    pub rows: usize,
    pub warning: Option<String>,
}

/// Slope of `log error` versus `log t` over the rows with
/// `t ≥ t_max / 10^window` (`window` in decades). Needs at least 5 rows in
/// the window; rows with zero error are dropped, and if none remain the slope
/// is NaN with a warning.
pub fn slope_diagnostic(trace: &[(f64, f64)], window: f64) -> Result<SlopeFit> {
    if !(window > 0.0) {
        return Err(Error::Config("slope window must be positive".into()));
    }
    let t_max = trace.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let lo = t_max / 10f64.powf(window);
    let in_window: Vec<(f64, f64)> = trace.iter().copied().filter(|&(t, _)| t >= lo && t > 0.0).collect();
    if in_window.len() < 5 {
        return Err(Error::Data(format!("{} rows in the slope window, need at least 5", in_window.len())));
    }
    let pts: Vec<(f64, f64)> = in_window
        .iter()
        .filter(|&&(_, e)| e > 0.0 && e.is_finite())
        .map(|&(t, e)| (t.ln(), e.ln()))
        .collect();
    let dropped = in_window.len() - pts.len();
    if pts.len() < 2 {
        return Ok(SlopeFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            rows: pts.len(),
            warning: Some("no positive errors in the window; slope undefined".into()),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
        rows: pts.len(),
        warning: (dropped > 0).then(|| format!("{dropped} rows with zero error ignored")),
    })
}

/// `P(Z = 1 | x)` for each covariate row under the fitted mixture.
pub fn predict_scores(model: &MixtureLogistic, theta: &[f64], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    if theta.len() != model.dim() {
        return Err(Error::Dimension { expected: model.dim(), got: theta.len() });
    }
    rows.iter()
        .map(|x| {
            if x.len() != model.dx {
                return Err(Error::Dimension { expected: model.dx, got: x.len() });
            }
            Ok(model.prob_one(theta, x))
        })
        .collect()
}

/// Writes the particles as CSV: `block_start_t,log_weight,theta_1..theta_d`.
pub fn write_checkpoint<W: Write>(w: W, sys: &ParticleSystem) -> Result<W> {
    let mut wr = csv::Writer::from_writer(w);
    let mut h = vec!["block_start_t".to_string(), "log_weight".to_string()];
    h.extend((1..=sys.dim()).map(|i| format!("theta_{i}")));
    wr.write_record(&h).map_err(csv_err)?;
    for (p, lw) in sys.rows().zip(sys.log_weights()) {
        let mut rec = vec![sys.block_start_t().to_string(), fmt_f64(*lw)];
        rec.extend(p.iter().map(|&v| fmt_f64(v)));
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Data(e.to_string()))?;
    wr.into_inner().map_err(|e| Error::Data(e.to_string()))
}

/// Reads a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint<R: Read>(r: R) -> Result<ParticleSystem> {
    let mut rd = csv::Reader::from_reader(r);
    let cols = rd.headers().map_err(csv_err)?.len();
    if cols < 3 {
        return Err(Error::Data("checkpoint needs at least one parameter column".into()));
    }
    let d = cols - 2;
    let (mut pts, mut lw, mut t0) = (Vec::new(), Vec::new(), 0u64);
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        t0 = rec[0].parse().map_err(|e| Error::Data(format!("bad block_start_t: {e}")))?;
        lw.push(parse_f64(&rec[1])?);
        for f in rec.iter().skip(2) {
            pts.push(parse_f64(f)?);
        }
    }
    ParticleSystem::from_parts(d, pts, lw, t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Branch;

    fn row(t: u64, err: f64) -> TraceRow {
        TraceRow {
            t,
            p: 1,
            xi: 0.5,
            eps: 0.25,
            q: 1,
            branch: Some(Branch::Own),
            aux_branch: None,
            z: 1.0,
            estimate: vec![0.1, -2.0],
            error: Some(err),
            ess: f64::NAN,
            tau: 3,
            temper: 3.0,
            mincut_objective: f64::NAN,
            sigma_norm: 10.0,
            partition: "1:2".into(),
            wall_ns_per_obs: 0.0,
        }
    }

    #[test]
    fn exact_power_law_slope() {
        let tr: Vec<(f64, f64)> = (0..30).map(|i| {
            let t = 10f64.powf(4.0 + i as f64 / 10.0);
            (t, t.powf(-0.5))
        }).collect();
        let f = slope_diagnostic(&tr, 1.0).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-6);
    }

    #[test]
    fn constant_error_zero_slope() {
        let tr: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64 * 1000.0, 0.3)).collect();
        assert!(slope_diagnostic(&tr, 2.0).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn zero_errors_give_nan() {
        let tr: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, 0.0)).collect();
        let f = slope_diagnostic(&tr, 3.0).unwrap();
        assert!(f.slope.is_nan() && f.warning.is_some());
    }

    #[test]
    fn too_few_rows() {
        let tr = [(1.0, 1.0), (2.0, 0.5)];
        assert!(slope_diagnostic(&tr, 1.0).is_err());
    }

    #[test]
    fn trace_round_trip_errors() {
        let rows = [row(10, 0.5), row(25, 0.125)];
        let buf = write_trace(Vec::new(), &rows, 2, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,p,xi,eps,q,branch,aux_estimate,z,error,ess"));
        assert_eq!(read_trace_errors(&buf[..]).unwrap(), vec![(10.0, 0.5), (25.0, 0.125)]);
        let no_err = String::from_utf8(write_trace(Vec::new(), &rows, 2, false).unwrap()).unwrap();
        assert!(!no_err.contains("error"));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let sys = ParticleSystem::from_parts(2, vec![0.1, 1.0 / 3.0, -7e-300, 2.5], vec![-1.0 / 7.0, f64::NEG_INFINITY], 42).unwrap();
        let buf = write_checkpoint(Vec::new(), &sys).unwrap();
        assert_eq!(read_checkpoint(&buf[..]).unwrap(), sys);
    }

    #[test]
    fn zero_regressions_score_half() {
        let m = MixtureLogistic::new(2, 3);
        let theta = [0.4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let s = predict_scores(&m, &theta, &[vec![1.0, 2.0, -3.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(s.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert!(predict_scores(&m, &theta, &[vec![1.0]]).is_err());
    }
}
