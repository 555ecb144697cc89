//! Float rows in checkpoint files. Rust's `{}` formatting prints the
//! shortest decimal string that parses back to the identical f64, so
//! write → read is bit-exact without binary formats.

use std::io::Write;

use crate::{Error, Result};

pub(crate) fn write_floats<W: Write>(out: &mut W, row: &[f64]) -> Result<()> {
    let mut line = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        line.push_str(&format!("{v}"));
    }
    writeln!(out, "{line}")?;
    Ok(())
}

pub(crate) fn parse_floats(line: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("bad float `{s}`")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::Checkpoint(format!(
            "expected {expected} floats, found {}",
            values.len()
        )));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_bit_exactly() {
        let row = [
            0.1,
            -1.0 / 3.0,
            f64::MIN_POSITIVE,
            1.7976931348623157e308,
            -0.0,
            2.0_f64.sqrt(),
        ];
        let mut buf = Vec::new();
        write_floats(&mut buf, &row).unwrap();
        let line = String::from_utf8(buf).unwrap();
        let back = parse_floats(line.trim_end(), row.len()).unwrap();
        for (a, b) in row.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn length_mismatch_is_checkpoint_error() {
        assert!(matches!(
            parse_floats("1 2 3", 2),
            Err(Error::Checkpoint(_))
        ));
    }
}
