//! Text checkpoints: a config header, one named block per parameter
//! tensor, and the vocabulary as `token<TAB>id` lines. Floats use
//! shortest round-trip formatting, so reload is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::baselines::checkpoint::{parse_floats, write_floats};
use crate::{Error, Result};

use super::params::{EncoderConfig, EncoderParams, ParamGroup, TensorView, TensorViewMut};
use super::vocab::Vocabulary;

const MAGIC: &str = "encoder v1";

pub(crate) fn write_config_line<W: Write>(out: &mut W, config: &EncoderConfig) -> Result<()> {
    writeln!(
        out,
        "config layers {} heads {} dim {} ffn {} positions {} vocab {} dropout {}",
        config.layers,
        config.heads,
        config.dim,
        config.ffn_dim,
        config.max_positions,
        config.vocab_size,
        config.dropout
    )?;
    Ok(())
}

pub(crate) fn parse_config_line(line: &str) -> Result<EncoderConfig> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 15 || parts[0] != "config" {
        return Err(Error::Checkpoint(format!("malformed config line `{line}`")));
    }
    let field = |key: &str, idx: usize| -> Result<&str> {
        if parts[idx] != key {
            return Err(Error::Checkpoint(format!(
                "expected `{key}` at position {idx} of the config line"
            )));
        }
        Ok(parts[idx + 1])
    };
    let parse_usize = |text: &str| -> Result<usize> {
        text.parse()
            .map_err(|_| Error::Checkpoint(format!("bad integer `{text}` in config")))
    };
    let config = EncoderConfig {
        layers: parse_usize(field("layers", 1)?)?,
        heads: parse_usize(field("heads", 3)?)?,
        dim: parse_usize(field("dim", 5)?)?,
        ffn_dim: parse_usize(field("ffn", 7)?)?,
        max_positions: parse_usize(field("positions", 9)?)?,
        vocab_size: parse_usize(field("vocab", 11)?)?,
        dropout: field("dropout", 13)?
            .parse()
            .map_err(|_| Error::Checkpoint("bad dropout value in config".into()))?,
    };
    config.validate()?;
    Ok(config)
}

/// Write every tensor of a parameter group as named blocks.
pub(crate) fn write_param_group<W: Write, P: ParamGroup>(out: &mut W, group: &P) -> Result<()> {
    for (name, view) in group.tensors() {
        match view {
            TensorView::Mat(m) => {
                writeln!(out, "tensor {name} {} {}", m.nrows(), m.ncols())?;
                for row in m.rows() {
                    write_floats(out, row.as_slice().expect("standard layout"))?;
                }
            }
            TensorView::Vec1(v) => {
                writeln!(out, "tensor {name} 1 {}", v.len())?;
                write_floats(out, v.as_slice().expect("standard layout"))?;
            }
        }
    }
    Ok(())
}

/// Fill a parameter group's tensors from named blocks, in schema order.
pub(crate) fn read_param_group<P: ParamGroup>(
    next_line: &mut dyn FnMut() -> Result<String>,
    group: &mut P,
) -> Result<()> {
    for (name, view) in group.tensors_mut() {
        let header = next_line()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(Error::Checkpoint(format!(
                "expected a tensor header, got `{header}`"
            )));
        }
        if parts[1] != name {
            return Err(Error::Checkpoint(format!(
                "expected tensor `{name}`, found `{}`",
                parts[1]
            )));
        }
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad row count for `{name}`")))?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad column count for `{name}`")))?;
        match view {
            TensorViewMut::Mat(m) => {
                if m.dim() != (rows, cols) {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {rows}×{cols}, expected {}×{}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    data.extend(parse_floats(&next_line()?, cols)?);
                }
                m.assign(&Array2::from_shape_vec((rows, cols), data).unwrap());
            }
            TensorViewMut::Vec1(v) => {
                if rows != 1 || cols != v.len() {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {rows}×{cols}, expected 1×{}",
                        v.len()
                    )));
                }
                v.assign(&Array1::from_vec(parse_floats(&next_line()?, cols)?));
            }
        }
    }
    Ok(())
}

pub(crate) fn write_vocab_section<W: Write>(out: &mut W, vocab: &Vocabulary) -> Result<()> {
    writeln!(out, "vocab {}", vocab.len())?;
    write!(out, "{}", vocab.to_text())?;
    Ok(())
}

pub(crate) fn read_vocab_section(
    next_line: &mut dyn FnMut() -> Result<String>,
) -> Result<Vocabulary> {
    let header = next_line()?;
    let count: usize = header
        .strip_prefix("vocab ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("expected a vocab header, got `{header}`")))?;
    let mut text = String::new();
    for _ in 0..count {
        text.push_str(&next_line()?);
        text.push('\n');
    }
    Vocabulary::from_text(&text)
}

/// Serialize config, parameters, and vocabulary to a writer.
pub fn save_encoder<W: Write>(
    out: &mut W,
    config: &EncoderConfig,
    params: &EncoderParams,
    vocab: &Vocabulary,
) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    write_config_line(out, config)?;
    write_param_group(out, params)?;
    write_vocab_section(out, vocab)?;
    writeln!(out, "end")?;
    Ok(())
}

/// Parse a checkpoint produced by [`save_encoder`].
pub fn load_encoder<R: BufRead>(input: R) -> Result<(EncoderConfig, EncoderParams, Vocabulary)> {
    let mut lines = input.lines();
    let mut next_line = move || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::Checkpoint("checkpoint ended early".into()))?
            .map_err(Error::from)
    };
    let magic = next_line()?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "not an encoder checkpoint (leading line `{magic}`)"
        )));
    }
    let config = parse_config_line(&next_line()?)?;
    let mut params = EncoderParams::init(&config, 0)?;
    params.zero_all();
    read_param_group(&mut next_line, &mut params)?;
    let vocab = read_vocab_section(&mut next_line)?;
    if vocab.len() != config.vocab_size {
        return Err(Error::Checkpoint(format!(
            "vocabulary has {} entries but the config says {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    if next_line()? != "end" {
        return Err(Error::Checkpoint("missing end marker".into()));
    }
    Ok((config, params, vocab))
}

pub fn save_encoder_file(
    path: &Path,
    config: &EncoderConfig,
    params: &EncoderParams,
    vocab: &Vocabulary,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    save_encoder(&mut out, config, params, vocab)
}

pub fn load_encoder_file(path: &Path) -> Result<(EncoderConfig, EncoderParams, Vocabulary)> {
    load_encoder(BufReader::new(File::open(path)?))
}
