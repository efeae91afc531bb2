//! CSV readers and writers for traces, diagnostics and tabulated data.
//!
//! Numbers are written in shortest round-trip form, so repeated runs give
//! byte-identical files.

use std::io::{Read, Write};

use crate::control::TabulatedControl;
use crate::costate::{HamiltonianTrace, HorizonRow, LimitingSolution};
use crate::error::{Error, Result};
use crate::integrate::FundamentalTrace;
use crate::oracle::Transcription;
use crate::shoot::BracketStep;

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// `t, x_1..x_m, A_11..A_mm, I_1..I_m, logdetA` at every accepted step.
pub fn write_fundamental_trace<W: Write>(w: W, trace: &FundamentalTrace) -> Result<()> {
    let m = trace.state_dim();
    let mut out = writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("x", m));
    for i in 1..=m {
        for j in 1..=m {
            header.push(format!("A_{i}{j}"));
        }
    }
    header.extend(indexed("I", m));
    header.push("logdetA".into());
    out.write_record(&header)?;
    for p in trace.points() {
        let mut row = vec![num(p.t)];
        row.extend(p.x.iter().chain(&p.a).chain(&p.i).map(|v| num(*v)));
        row.push(num(p.logdet));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `t, psi_1..psi_m, lambda, H_direct, H_michel` on the Hamiltonian grid.
pub fn write_costate_trace<W: Write>(
    w: W,
    limiting: &LimitingSolution,
    trace: &HamiltonianTrace,
) -> Result<()> {
    let m = limiting.psi0_star.len();
    let mut out = writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("psi", m));
    header.extend(["lambda", "H_direct", "H_michel"].map(String::from));
    out.write_record(&header)?;
    for row in &trace.rows {
        let mut rec = vec![num(row.t)];
        rec.extend(limiting.psi_at(row.t).into_iter().map(num));
        rec.extend([limiting.lambda_star, row.h_direct, row.h_michel].map(num));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `T, H_direct, H_michel`.
pub fn write_hamiltonian_trace<W: Write>(w: W, trace: &HamiltonianTrace) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["T", "H_direct", "H_michel"])?;
    for row in &trace.rows {
        out.write_record([row.t, row.h_direct, row.h_michel].map(num))?;
    }
    out.flush()?;
    Ok(())
}

/// `tau, lambda_n, psi0_1..psi0_m, I_norm`.
pub fn write_horizon_diagnostics<W: Write>(w: W, rows: &[HorizonRow]) -> Result<()> {
    let m = rows.first().map_or(0, |r| r.psi0_n.len());
    let mut out = writer(w);
    let mut header = vec!["tau".to_string(), "lambda_n".to_string()];
    header.extend(indexed("psi0", m));
    header.push("I_norm".into());
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![num(r.tau), num(r.lambda_n)];
        rec.extend(r.psi0_n.iter().map(|v| num(*v)));
        rec.push(num(r.i_norm));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `iter, psi_lo, psi_hi, psi_mid, residual`.
pub fn write_bracket_history<W: Write>(w: W, history: &[BracketStep]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["iter", "psi_lo", "psi_hi", "psi_mid", "residual"])?;
    for s in history {
        out.write_record([
            s.iter.to_string(),
            num(s.psi_lo),
            num(s.psi_hi),
            num(s.psi_mid),
            num(s.residual),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `k, t_k, u_1..u_k, x_1..x_m, p_1..p_m`; the control fields of the last
/// node are empty.
pub fn write_transcription<W: Write>(w: W, t: &Transcription) -> Result<()> {
    let k_dim = t.controls.first().map_or(0, |u| u.len());
    let m = t.states.first().map_or(0, |x| x.len());
    let mut out = writer(w);
    let mut header = vec!["k".to_string(), "t_k".to_string()];
    header.extend(indexed("u", k_dim));
    header.extend(indexed("x", m));
    header.extend(indexed("p", m));
    out.write_record(&header)?;
    for k in 0..=t.steps {
        let mut rec = vec![k.to_string(), num(t.time(k))];
        match t.controls.get(k) {
            Some(u) => rec.extend(u.iter().map(|v| num(*v))),
            None => rec.extend(std::iter::repeat(String::new()).take(k_dim)),
        }
        rec.extend(t.states[k].iter().map(|v| num(*v)));
        rec.extend(t.multipliers[k].iter().map(|v| num(*v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `t, <prefix>_1..<prefix>_n` rows.
pub fn write_tabulated<W: Write>(
    w: W,
    prefix: &str,
    times: &[f64],
    values: &[Vec<f64>],
) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::Dimension {
            what: "tabulated rows",
            expected: times.len(),
            got: values.len(),
        });
    }
    let n = values.first().map_or(0, |v| v.len());
    let mut out = writer(w);
    let mut header = vec!["t".to_string()];
    header.extend(indexed(prefix, n));
    out.write_record(&header)?;
    for (t, v) in times.iter().zip(values) {
        let mut rec = vec![num(*t)];
        rec.extend(v.iter().map(|x| num(*x)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads `t, <prefix>_1..<prefix>_n` with a checked header.
pub fn read_tabulated<R: Read>(r: R, prefix: &str) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = rdr.headers()?.clone();
    let n = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain(indexed(prefix, n))
        .collect();
    if n == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse(format!(
            "expected header {}, got {}",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: Vec<f64> = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {f:?}: {e}", line + 2)))
            })
            .collect::<Result<_>>()?;
        if parsed.len() != n + 1 {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                parsed.len(),
                n + 1
            )));
        }
        times.push(parsed[0]);
        values.push(parsed[1..].to_vec());
    }
    Ok((times, values))
}

/// A piecewise-constant control from `t,u_1..u_k` rows.
pub fn read_tabulated_control<R: Read>(r: R) -> Result<TabulatedControl> {
    let (times, values) = read_tabulated(r, "u")?;
    TabulatedControl::new(times, values)
}

/// A sampled trajectory from `t,x_1..x_m` rows.
pub fn read_trajectory<R: Read>(r: R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    read_tabulated(r, "x")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_round_trip_is_exact() {
        let times = vec![0.0, 0.1, 1.0 / 3.0];
        let values = vec![
            vec![1.0, -2.5],
            vec![1e-300, 0.1 + 0.2],
            vec![std::f64::consts::PI, 0.0],
        ];
        let mut buf = Vec::new();
        write_tabulated(&mut buf, "u", &times, &values).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,u_1,u_2\n"));
        let (t2, v2) = read_tabulated(buf.as_slice(), "u").unwrap();
        assert_eq!(t2, times);
        assert_eq!(v2, values);
    }

    #[test]
    fn wrong_header_is_rejected() {
        let err = read_tabulated("t,x_1\n0,1\n".as_bytes(), "u").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn bad_number_names_the_row() {
        let err = read_tabulated("t,u_1\n0,1\n1,abc\n".as_bytes(), "u").unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn control_reader_builds_a_tabulated_control() {
        let c = read_tabulated_control("t,u_1\n0,0.5\n1,0.25\n2,0\n".as_bytes()).unwrap();
        assert_eq!(c.times(), &[0.0, 1.0, 2.0]);
    }
}
