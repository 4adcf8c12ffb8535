//! Model container: a line-oriented text header followed by raw weights.
//!
//! ```text
//! nnfuzz-model v1
//! name mini-lenet
//! input_shape 28 28 1
//! layers 6
//! layer conv2d kh=5 kw=5 cin=1 cout=4 stride=1 padding=valid relu=1 traced=1 weights=100 bias=4
//! layer maxpool2d window=2 stride=2
//! layer flatten
//! layer dense in=576 out=16 relu=1 traced=1 weights=9216 bias=16
//! layer dense in=16 out=10 relu=0 traced=1 weights=160 bias=10
//! layer softmax
//! end
//! <binary>
//! ```
//!
//! The binary section holds, for each parameterised layer in header order,
//! `weights` then `bias` as little-endian `f32`. Nothing may follow the last
//! block.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{LayerSpec, Model};
use crate::error::NnError;
use crate::tensor::Shape;

const MAGIC: &str = "nnfuzz-model v1";

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), NnError> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, NnError> {
    let bytes = fs::read(path)?;
    read_model(&mut bytes.as_slice())
}

pub fn write_model(model: &Model, out: &mut impl Write) -> Result<(), NnError> {
    let dims: Vec<String> = model
        .input_shape()
        .dims()
        .iter()
        .map(|d| d.to_string())
        .collect();
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "name {}", model.name())?;
    writeln!(out, "input_shape {}", dims.join(" "))?;
    writeln!(out, "layers {}", model.layers().len())?;
    for (i, layer) in model.layers().iter().enumerate() {
        let traced = u8::from(model.is_traced(i));
        let line = match layer {
            LayerSpec::Dense {
                in_dim,
                out_dim,
                weights,
                bias,
                relu,
            } => format!(
                "dense in={in_dim} out={out_dim} relu={} traced={traced} weights={} bias={}",
                u8::from(*relu),
                weights.len(),
                bias.len()
            ),
            LayerSpec::Conv2d {
                kh,
                kw,
                cin,
                cout,
                stride,
                weights,
                bias,
                relu,
            } => format!(
                "conv2d kh={kh} kw={kw} cin={cin} cout={cout} stride={stride} padding=valid relu={} traced={traced} weights={} bias={}",
                u8::from(*relu),
                weights.len(),
                bias.len()
            ),
            LayerSpec::MaxPool2d { window, stride } => format!("maxpool2d window={window} stride={stride}"),
            LayerSpec::Relu => format!("relu traced={traced}"),
            LayerSpec::Flatten => "flatten".to_string(),
            LayerSpec::Softmax => "softmax".to_string(),
        };
        writeln!(out, "layer {line}")?;
    }
    writeln!(out, "end")?;
    for layer in model.layers() {
        if let Some((weights, bias)) = layer.params() {
            for v in weights.iter().chain(bias) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

struct PendingLayer {
    kind: String,
    fields: HashMap<String, String>,
    line: usize,
}

impl PendingLayer {
    fn get(&self, key: &str) -> Result<usize, NnError> {
        let raw = self
            .fields
            .get(key)
            .ok_or_else(|| NnError::MalformedHeader {
                line: self.line,
                reason: format!("{} layer is missing `{key}`", self.kind),
            })?;
        raw.parse().map_err(|_| NnError::MalformedHeader {
            line: self.line,
            reason: format!("`{key}={raw}` is not a non-negative integer"),
        })
    }

    fn flag(&self, key: &str) -> Result<bool, NnError> {
        match self.fields.get(key).map(String::as_str) {
            None | Some("0") => Ok(false),
            Some("1") => Ok(true),
            Some(other) => Err(NnError::MalformedHeader {
                line: self.line,
                reason: format!("`{key}={other}` must be 0 or 1"),
            }),
        }
    }
}

fn read_line(input: &mut &[u8], line_no: &mut usize) -> Result<String, NnError> {
    *line_no += 1;
    let end = input
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| NnError::MalformedHeader {
            line: *line_no,
            reason: "unexpected end of header".into(),
        })?;
    let line = std::str::from_utf8(&input[..end]).map_err(|_| NnError::MalformedHeader {
        line: *line_no,
        reason: "header is not UTF-8".into(),
    })?;
    let line = line.trim_end_matches('\r').to_string();
    *input = &input[end + 1..];
    Ok(line)
}

fn keyed<'a>(line: &'a str, key: &str, line_no: usize) -> Result<&'a str, NnError> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| NnError::MalformedHeader {
            line: line_no,
            reason: format!("expected `{key} ...`, found `{line}`"),
        })
}

pub fn read_model(input: &mut impl Read) -> Result<Model, NnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut rest: &[u8] = &bytes;
    let mut line_no = 0;

    let magic = read_line(&mut rest, &mut line_no)?;
    if magic != MAGIC {
        return Err(NnError::MalformedHeader {
            line: line_no,
            reason: format!("expected `{MAGIC}`"),
        });
    }
    let name = keyed(&read_line(&mut rest, &mut line_no)?, "name", line_no)?.to_string();
    let shape_line = read_line(&mut rest, &mut line_no)?;
    let dims = keyed(&shape_line, "input_shape", line_no)?
        .split_whitespace()
        .map(|d| d.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| NnError::MalformedHeader {
            line: line_no,
            reason: "input_shape must be integers".into(),
        })?;
    let count_line = read_line(&mut rest, &mut line_no)?;
    let count: usize = keyed(&count_line, "layers", line_no)?
        .trim()
        .parse()
        .map_err(|_| NnError::MalformedHeader {
            line: line_no,
            reason: "layer count must be an integer".into(),
        })?;

    let mut pending = Vec::with_capacity(count);
    for _ in 0..count {
        let line = read_line(&mut rest, &mut line_no)?;
        let body = keyed(&line, "layer", line_no)?;
        let mut tokens = body.split_whitespace();
        let kind = tokens.next().unwrap_or_default().to_string();
        let mut fields = HashMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| NnError::MalformedHeader {
                    line: line_no,
                    reason: format!("expected key=value, found `{tok}`"),
                })?;
            fields.insert(k.to_string(), v.to_string());
        }
        pending.push(PendingLayer {
            kind,
            fields,
            line: line_no,
        });
    }
    let end = read_line(&mut rest, &mut line_no)?;
    if end != "end" {
        return Err(NnError::MalformedHeader {
            line: line_no,
            reason: format!("expected `end`, found `{end}`"),
        });
    }
    if pending.is_empty() {
        return Err(NnError::NoLayers);
    }

    let mut layers = Vec::with_capacity(pending.len());
    let mut traced = Vec::new();
    for (index, p) in pending.iter().enumerate() {
        let mut take_params = |declared: (usize, usize)| -> Result<(Vec<f32>, Vec<f32>), NnError> {
            let (wn, bn) = (p.get("weights")?, p.get("bias")?);
            if wn != declared.0 {
                return Err(NnError::WeightLengthMismatch {
                    layer: index,
                    expected: declared.0,
                    found: wn,
                });
            }
            if bn != declared.1 {
                return Err(NnError::WeightLengthMismatch {
                    layer: index,
                    expected: declared.1,
                    found: bn,
                });
            }
            let weights = take_f32s(&mut rest, wn, index)?;
            let bias = take_f32s(&mut rest, bn, index)?;
            Ok((weights, bias))
        };
        let layer = match p.kind.as_str() {
            "dense" => {
                let (in_dim, out_dim) = (p.get("in")?, p.get("out")?);
                let (weights, bias) = take_params((in_dim * out_dim, out_dim))?;
                LayerSpec::Dense {
                    in_dim,
                    out_dim,
                    weights,
                    bias,
                    relu: p.flag("relu")?,
                }
            }
            "conv2d" => {
                if let Some(padding) = p.fields.get("padding") {
                    if padding != "valid" {
                        return Err(NnError::MalformedHeader {
                            line: p.line,
                            reason: format!("unsupported padding `{padding}`"),
                        });
                    }
                }
                let (kh, kw, cin, cout) =
                    (p.get("kh")?, p.get("kw")?, p.get("cin")?, p.get("cout")?);
                let stride = p.get("stride")?;
                let (weights, bias) = take_params((kh * kw * cin * cout, cout))?;
                LayerSpec::Conv2d {
                    kh,
                    kw,
                    cin,
                    cout,
                    stride,
                    weights,
                    bias,
                    relu: p.flag("relu")?,
                }
            }
            "maxpool2d" => LayerSpec::MaxPool2d {
                window: p.get("window")?,
                stride: p.get("stride")?,
            },
            "relu" => LayerSpec::Relu,
            "flatten" => LayerSpec::Flatten,
            "softmax" => LayerSpec::Softmax,
            other => {
                return Err(NnError::MalformedHeader {
                    line: p.line,
                    reason: format!("unknown layer kind `{other}`"),
                })
            }
        };
        if p.flag("traced")? {
            traced.push(index);
        }
        layers.push(layer);
    }
    if !rest.is_empty() {
        return Err(NnError::TrailingBytes { count: rest.len() });
    }
    Model::new(name, Shape::new(dims), layers, &traced)
}

fn take_f32s(rest: &mut &[u8], n: usize, layer: usize) -> Result<Vec<f32>, NnError> {
    let bytes = n * 4;
    if rest.len() < bytes {
        return Err(NnError::TruncatedWeights { layer });
    }
    let (block, tail) = rest.split_at(bytes);
    *rest = tail;
    let values: Vec<f32> = block
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteWeight { layer });
    }
    Ok(values)
}
