//! Trace files: one JSON header line, then named CSV blocks, each introduced
//! by `#block <name> <rows> <cols>`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::data::{write_text, FORMAT_VERSION};
use crate::engine::{PosteriorTrace, RunConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TraceBlock {
    pub name: String,
    pub values: DMatrix<f64>,
}

fn push_block(out: &mut String, name: &str, m: &DMatrix<f64>) {
    writeln!(out, "#block {name} {} {}", m.nrows(), m.ncols()).expect("write to string");
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
}

fn row_matrix(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, values.len(), values)
}

/// Per-iteration diagnostics as a table with a header row.
pub fn diagnostics_csv(trace: &PosteriorTrace) -> String {
    let mut out = String::from("iteration,log_likelihood,mh_acceptance,mh_non_finite,num_clusters,alpha,clamp_events,map_start,map_end\n");
    for d in &trace.diagnostics {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            d.iteration, d.log_likelihood, d.mh_acceptance, d.mh_non_finite, d.num_clusters, d.alpha, d.clamp_events, d.map_start, d.map_end
        )
        .expect("write to string");
    }
    out
}

/// Render a trace: header (format version, config echo, chain index, shapes),
/// a `records` table with one row of scalars per kept iteration, then per
/// record `x.<i>`, `w.<i>`, `z.<i>`, `noise_var.<i>`, `dispersion.<i>`, and
/// finally `x_mean` and `coefficient_mean`.
pub fn render_trace(trace: &PosteriorTrace, config: &RunConfig, chain: usize) -> String {
    let config_echo: serde_json::Map<String, Value> =
        config.to_pairs().into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    let header = json!({
        "format_version": FORMAT_VERSION,
        "chain": chain,
        "config": config_echo,
        "num_records": trace.records.len(),
        "num_rows": trace.x_mean.nrows(),
        "latent_dim": trace.x_mean.ncols(),
        "record_columns": ["iteration", "alpha", "num_clusters", "log_likelihood", "mh_acceptance", "clamp_events", "dispersion_rate"],
    });
    let mut out = header.to_string();
    out.push('\n');
    let scalars = DMatrix::from_fn(trace.records.len(), 7, |i, c| {
        let r = &trace.records[i];
        match c {
            0 => r.iteration as f64,
            1 => r.alpha,
            2 => r.num_clusters as f64,
            3 => r.log_likelihood,
            4 => r.mh_acceptance,
            5 => r.clamp_events as f64,
            _ => r.dispersion_rate,
        }
    });
    push_block(&mut out, "records", &scalars);
    for (i, r) in trace.records.iter().enumerate() {
        push_block(&mut out, &format!("x.{i}"), &r.x);
        push_block(&mut out, &format!("w.{i}"), &r.w);
        let z: Vec<f64> = r.z.iter().map(|&v| v as f64).collect();
        push_block(&mut out, &format!("z.{i}"), &row_matrix(&z));
        push_block(&mut out, &format!("noise_var.{i}"), &row_matrix(r.noise_var.as_slice()));
        push_block(&mut out, &format!("dispersion.{i}"), &row_matrix(r.dispersion.as_slice()));
    }
    push_block(&mut out, "x_mean", &trace.x_mean);
    push_block(&mut out, "coefficient_mean", &trace.coefficient_mean);
    out
}

pub fn write_trace(path: &Path, trace: &PosteriorTrace, config: &RunConfig, chain: usize) -> Result<()> {
    write_text(path, &render_trace(trace, config, chain))
}

fn parse_error(line: usize, msg: impl Into<String>) -> Error {
    Error::Data { row: line, col: 0, msg: msg.into() }
}

/// Parse a rendered trace back into its header and blocks.
pub fn parse_trace(text: &str) -> Result<(Value, Vec<TraceBlock>)> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| parse_error(0, "empty trace"))?;
    let header: Value = serde_json::from_str(first)?;
    if header.get("format_version").and_then(Value::as_u64) != Some(u64::from(FORMAT_VERSION)) {
        return Err(parse_error(0, "unsupported or missing format_version"));
    }
    let mut blocks = Vec::new();
    while let Some((i, line)) = lines.next() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "#block" {
            return Err(parse_error(i, format!("expected a block marker, got {line:?}")));
        }
        let rows: usize = parts[2].parse().map_err(|_| parse_error(i, "bad row count"))?;
        let cols: usize = parts[3].parse().map_err(|_| parse_error(i, "bad column count"))?;
        let mut values = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            let (li, row) = lines.next().ok_or_else(|| parse_error(i, "truncated block"))?;
            let cells: Vec<&str> = if cols == 0 { Vec::new() } else { row.split(',').collect() };
            if cells.len() != cols {
                return Err(parse_error(li, format!("expected {cols} cells, got {}", cells.len())));
            }
            for (c, cell) in cells.iter().enumerate() {
                values[(r, c)] = cell.trim().parse().map_err(|_| Error::Data { row: li, col: c, msg: format!("not a number: {cell:?}") })?;
            }
        }
        blocks.push(TraceBlock { name: parts[1].to_string(), values });
    }
    Ok((header, blocks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_s_curve, sample_gp_observations, EmissionOptions};
    use crate::engine::run;
    use crate::likelihoods::LikelihoodKind;
    use crate::rng::RngStreams;

    #[test]
    fn trace_round_trips_bitwise() {
        let mut rng = RngStreams::new(2).stream("data");
        let x = generate_s_curve(15, 0.05, &mut rng).unwrap();
        let (obs, _) = sample_gp_observations(&x, 4, LikelihoodKind::Gaussian, &EmissionOptions::default(), &mut rng).unwrap();
        let cfg = RunConfig {
            iterations: 4,
            burn_in: 2,
            num_features: 6,
            kind: LikelihoodKind::Gaussian,
            ..Default::default()
        };
        let trace = run(&cfg, &obs).unwrap();
        let text = render_trace(&trace, &cfg, 0);
        let (header, blocks) = parse_trace(&text).unwrap();
        assert_eq!(header["num_records"], 2);
        assert_eq!(header["config"]["kind"], "gaussian");
        let get = |n: &str| &blocks.iter().find(|b| b.name == n).unwrap().values;
        assert_eq!(get("x_mean"), &trace.x_mean);
        assert_eq!(get("w.1"), &trace.records[1].w);
        assert_eq!(get("records")[(1, 3)], trace.records[1].log_likelihood);
        assert_eq!(blocks.len(), 3 + 5 * 2);
    }

    #[test]
    fn rejects_wrong_version_and_ragged_blocks() {
        assert!(parse_trace("{\"format_version\":99}\n").is_err());
        assert!(parse_trace("{\"format_version\":1}\n#block a 1 2\n1\n").is_err());
        assert!(parse_trace("{\"format_version\":1}\n#block a 2 1\n1\n").is_err());
    }
}
