//! CSV output for round and epoch records.
//!
//! Decimal fields are printed with 6 significant digits in `%g` style so the
//! files are byte-identical for identical runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{EpochRecord, RoundRecord};

pub const ROUND_HEADER: &str =
    "epoch,round,mode,channel_uses,channel_uses_cum,recovered,pd,pfa,b_hat,active_count,L,n_c,aborted";
pub const EPOCH_HEADER: &str = "epoch,test_accuracy,Q,L,n_c";

/// `%g` with 6 significant digits.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (5 - exp) as usize, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn rounds_csv(records: &[RoundRecord]) -> String {
    let mut out = String::from(ROUND_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.round,
            r.mode.as_str(),
            r.channel_uses,
            r.channel_uses_cum,
            r.recovered,
            format_sig6(r.pd),
            format_sig6(r.pfa),
            r.b_hat,
            r.active_count,
            r.l,
            r.n_c,
            u8::from(r.aborted)
        )
        .unwrap();
    }
    out
}

pub fn epochs_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from(EPOCH_HEADER);
    out.push('\n');
    for e in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.epoch,
            format_sig6(e.test_accuracy),
            format_sig6(e.q),
            e.l,
            e.n_c
        )
        .unwrap();
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn emit_records(records: &[RoundRecord], path: &Path) -> Result<()> {
    write_file(path, &rounds_csv(records))
}

pub fn emit_epochs(records: &[EpochRecord], path: &Path) -> Result<()> {
    write_file(path, &epochs_csv(records))
}
