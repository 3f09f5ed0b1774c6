use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::sweep::{SweepRow, Variant};

fn column(v: Variant) -> String {
    format!("rmse_{}_deg", v.name())
}

pub fn header(variants: &BTreeSet<Variant>) -> Vec<String> {
    let mut cols = vec!["snr_db".to_string()];
    cols.extend(variants.iter().map(|&v| column(v)));
    cols.push("branch_error_rate".to_string());
    cols
}

/// Shortest round-trip decimal, padded with trailing zeros to at least six
/// significant digits. Never uses exponent notation.
pub fn format_decimal(x: f64) -> String {
    let s = format!("{x}");
    if !x.is_finite() {
        return s;
    }
    let significant = s
        .chars()
        .filter(char::is_ascii_digit)
        .skip_while(|&c| c == '0')
        .count();
    if significant >= 6 {
        return s;
    }
    let decimals = s.split_once('.').map_or(0, |(_, frac)| frac.len());
    let extra = if x == 0.0 { 6 } else { 6 - significant };
    format!("{:.*}", decimals + extra, x)
}

fn io(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Writes the sweep table. The header is written even when `rows` is empty.
pub fn write_csv<W: Write>(rows: &[SweepRow], variants: &BTreeSet<Variant>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(variants)).map_err(io)?;
    for row in rows {
        let mut rec = vec![format_decimal(row.snr_db)];
        for v in variants {
            let value = row.rmse_deg.get(v).ok_or_else(|| {
                Error::usage(format!("row at {} dB has no {v} column", row.snr_db))
            })?;
            rec.push(format_decimal(*value));
        }
        rec.push(format_decimal(row.branch_error_rate));
        w.write_record(rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[SweepRow], variants: &BTreeSet<Variant>, path: &Path) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))?;
    write_csv(rows, variants, file)
}

/// Parses a table produced by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<(BTreeSet<Variant>, Vec<SweepRow>)> {
    let mut r = csv::Reader::from_reader(input);
    let cols: Vec<String> = r
        .headers()
        .map_err(io)?
        .iter()
        .map(str::to_string)
        .collect();
    let bad_header = || Error::usage(format!("unexpected CSV header {cols:?}"));
    if cols.len() < 2 || cols[0] != "snr_db" || cols[cols.len() - 1] != "branch_error_rate" {
        return Err(bad_header());
    }
    let mut order = Vec::new();
    for name in &cols[1..cols.len() - 1] {
        let v = name
            .strip_prefix("rmse_")
            .and_then(|s| s.strip_suffix("_deg"))
            .ok_or_else(bad_header)?
            .parse::<Variant>()?;
        order.push(v);
    }
    let variants: BTreeSet<Variant> = order.iter().copied().collect();
    if variants.len() != order.len() {
        return Err(bad_header());
    }

    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::usage(format!("bad number '{}' in CSV", &rec[i])))
        };
        let rmse_deg = order
            .iter()
            .enumerate()
            .map(|(k, &v)| Ok((v, num(k + 1)?)))
            .collect::<Result<_>>()?;
        rows.push(SweepRow {
            snr_db: num(0)?,
            rmse_deg,
            branch_error_rate: num(cols.len() - 1)?,
        });
    }
    Ok((variants, rows))
}
