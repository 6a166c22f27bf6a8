//! Per-sample run records and their CSV form.
//!
//! One record is logged per retained controller sample (see the scenario's
//! `trace_every` decimation). The CSV header names every column with its SI
//! unit; floats are written with shortest round-trip formatting, so identical
//! runs produce byte-identical files.

use std::io::{self, BufRead, Write};

/// Everything logged at one controller sample. `lyapunov` is populated by
/// the analysis pass (`f64::NAN` until then).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub v_o: f64,
    pub i_t: Vec<f64>,
    pub u: Vec<f64>,
    pub xi: f64,
    pub z1: f64,
    pub z2: f64,
    pub z2i: Vec<f64>,
    pub theta_hat: [f64; 3],
    pub theta_c_hat: [f64; 3],
    pub c_inv_hat: f64,
    pub l_inv_hat: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub i_l_star_hat: f64,
    pub lyapunov: f64,
    pub clamp: bool,
}

/// Column names, in file order, for a system of `n` converters.
pub fn csv_header(n: usize) -> Vec<String> {
    let mut cols = vec!["t_s".to_string(), "v_o_V".to_string()];
    let per = |stem: &str, unit: &str, count: usize| {
        (1..=count)
            .map(move |k| format!("{stem}{k}_{unit}"))
            .collect::<Vec<_>>()
    };
    cols.extend(per("i_t", "A", n));
    cols.extend(per("u_", "duty", n));
    cols.push("xi_A".into());
    cols.push("z1_trans".into());
    cols.push("z2_A".into());
    cols.extend(per("z2i_", "A", n - 1));
    cols.extend(["g_hat_S".into(), "p_hat_W".into(), "i_hat_A".into()]);
    cols.extend([
        "gc_hat_S_per_F".into(),
        "pc_hat_W_per_F".into(),
        "ic_hat_A_per_F".into(),
    ]);
    cols.push("c_inv_hat_per_F".into());
    cols.extend(per("l_inv_hat", "per_H", n));
    cols.extend(per("lambda_hat", "per_s", n));
    cols.extend(per("mu_hat", "A_per_s", n));
    cols.push("i_l_star_hat_A".into());
    cols.push("lyapunov_J".into());
    cols.push("clamp_flag".into());
    cols
}

fn fields(r: &TraceRecord) -> Vec<f64> {
    let mut out = vec![r.t, r.v_o];
    out.extend(&r.i_t);
    out.extend(&r.u);
    out.push(r.xi);
    out.push(r.z1);
    out.push(r.z2);
    out.extend(&r.z2i);
    out.extend(r.theta_hat);
    out.extend(r.theta_c_hat);
    out.push(r.c_inv_hat);
    out.extend(&r.l_inv_hat);
    out.extend(&r.lambda_hat);
    out.extend(&r.mu_hat);
    out.push(r.i_l_star_hat);
    out.push(r.lyapunov);
    out.push(if r.clamp { 1.0 } else { 0.0 });
    out
}

pub fn write_csv<W: Write>(records: &[TraceRecord], n: usize, mut w: W) -> io::Result<()> {
    writeln!(w, "{}", csv_header(n).join(","))?;
    let mut line = String::with_capacity(1024);
    for r in records {
        line.clear();
        for (k, v) in fields(r).iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Read a trace produced by [`write_csv`]. The converter count is recovered
/// from the header.
pub fn read_csv<R: BufRead>(r: R) -> io::Result<(usize, Vec<TraceRecord>)> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad("empty trace file"))??;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols
        .iter()
        .filter(|c| c.starts_with("i_t") && c.ends_with("_A"))
        .count();
    if n == 0 || cols.len() != csv_header(n).len() {
        return Err(bad("trace header does not match the expected schema"));
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| bad("non-numeric field in trace"))
            })
            .collect::<Result<_, _>>()?;
        if vals.len() != cols.len() {
            return Err(bad("trace row width does not match header"));
        }
        let mut it = vals.into_iter();
        let mut take = |k: usize| -> Vec<f64> { (&mut it).take(k).collect() };
        let t = take(1)[0];
        let v_o = take(1)[0];
        let i_t = take(n);
        let u = take(n);
        let xi = take(1)[0];
        let z1 = take(1)[0];
        let z2 = take(1)[0];
        let z2i = take(n - 1);
        let th = take(3);
        let thc = take(3);
        let c_inv_hat = take(1)[0];
        let l_inv_hat = take(n);
        let lambda_hat = take(n);
        let mu_hat = take(n);
        let i_l_star_hat = take(1)[0];
        let lyapunov = take(1)[0];
        let clamp = take(1)[0] != 0.0;
        records.push(TraceRecord {
            t,
            v_o,
            i_t,
            u,
            xi,
            z1,
            z2,
            z2i,
            theta_hat: [th[0], th[1], th[2]],
            theta_c_hat: [thc[0], thc[1], thc[2]],
            c_inv_hat,
            l_inv_hat,
            lambda_hat,
            mu_hat,
            i_l_star_hat,
            lyapunov,
            clamp,
        });
    }
    Ok((n, records))
}
