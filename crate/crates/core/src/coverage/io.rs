//! Profile and coverage-state files.
//!
//! Both share a small text header terminated by `end`:
//!
//! ```text
//! nnfuzz-profile v1        (or nnfuzz-coverage v1)
//! neurons 2330
//! k 10
//! end
//! ```
//!
//! A profile is followed by `(low, high)` pairs of little-endian `f32`, one
//! pair per neuron. A coverage state is followed by the section, upper and
//! lower bitsets, each as little-endian `u64` words, lowest bit first.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{BitSet, CoverageState, NeuronProfile};
use crate::error::CoverageError;

const PROFILE_MAGIC: &str = "nnfuzz-profile v1";
const STATE_MAGIC: &str = "nnfuzz-coverage v1";

fn write_header(
    out: &mut impl Write,
    magic: &str,
    neurons: usize,
    k: usize,
) -> std::io::Result<()> {
    write!(out, "{magic}\nneurons {neurons}\nk {k}\nend\n")
}

fn parse_header<'a>(
    bytes: &'a [u8],
    magic: &str,
) -> Result<(usize, usize, &'a [u8]), CoverageError> {
    let mut rest = bytes;
    let mut lines = Vec::with_capacity(4);
    for _ in 0..4 {
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| CoverageError::Malformed("unterminated header".into()))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| CoverageError::Malformed("header is not UTF-8".into()))?;
        lines.push(line);
        rest = &rest[end + 1..];
    }
    if lines[0] != magic || lines[3] != "end" {
        return Err(CoverageError::Malformed(format!(
            "expected `{magic}` header"
        )));
    }
    let field = |line: &str, key: &str| -> Result<usize, CoverageError> {
        line.strip_prefix(key)
            .and_then(|v| v.strip_prefix(' '))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| {
                CoverageError::Malformed(format!("expected `{key} <integer>`, found `{line}`"))
            })
    };
    Ok((field(lines[1], "neurons")?, field(lines[2], "k")?, rest))
}

pub fn write_profile(profile: &NeuronProfile, out: &mut impl Write) -> Result<(), CoverageError> {
    write_header(out, PROFILE_MAGIC, profile.neuron_count(), profile.k())?;
    for (l, h) in profile.low().iter().zip(profile.high()) {
        out.write_all(&l.to_le_bytes())?;
        out.write_all(&h.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_profile(input: &mut impl Read) -> Result<NeuronProfile, CoverageError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let (neurons, k, payload) = parse_header(&bytes, PROFILE_MAGIC)?;
    if payload.len() != neurons * 8 {
        return Err(CoverageError::Malformed(format!(
            "expected {} payload bytes, found {}",
            neurons * 8,
            payload.len()
        )));
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let low = floats.iter().step_by(2).copied().collect();
    let high = floats.iter().skip(1).step_by(2).copied().collect();
    NeuronProfile::from_bounds(low, high, k)
}

pub fn save_profile(profile: &NeuronProfile, path: impl AsRef<Path>) -> Result<(), CoverageError> {
    let mut buf = Vec::new();
    write_profile(profile, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<NeuronProfile, CoverageError> {
    read_profile(&mut fs::File::open(path)?)
}

pub fn write_state(state: &CoverageState, out: &mut impl Write) -> Result<(), CoverageError> {
    write_header(out, STATE_MAGIC, state.neuron_count(), state.k())?;
    for set in [state.sections(), state.upper(), state.lower()] {
        for w in set.words() {
            out.write_all(&w.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_state(input: &mut impl Read) -> Result<CoverageState, CoverageError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let (neurons, k, mut payload) = parse_header(&bytes, STATE_MAGIC)?;
    let mut take = |bits: usize| -> Result<BitSet, CoverageError> {
        let n = bits.div_ceil(64);
        if payload.len() < n * 8 {
            return Err(CoverageError::Malformed("truncated bitset".into()));
        }
        let (block, tail) = payload.split_at(n * 8);
        payload = tail;
        let words = block
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        BitSet::from_words(bits, words)
            .ok_or_else(|| CoverageError::Malformed("bits set past the end".into()))
    };
    let sections = take(neurons * k)?;
    let upper = take(neurons)?;
    let lower = take(neurons)?;
    if !payload.is_empty() {
        return Err(CoverageError::Malformed(format!(
            "{} trailing bytes",
            payload.len()
        )));
    }
    CoverageState::from_parts(neurons, k, sections, upper, lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ActivationTrace;

    #[test]
    fn profile_round_trip() {
        let p = NeuronProfile::from_bounds(vec![-1.5, 0.25, 3.0], vec![2.0, 0.25, 9.5], 7).unwrap();
        let mut buf = Vec::new();
        write_profile(&p, &mut buf).unwrap();
        assert!(buf.starts_with(b"nnfuzz-profile v1\nneurons 3\nk 7\nend\n"));
        assert_eq!(read_profile(&mut buf.as_slice()).unwrap(), p);
        buf.pop();
        assert!(read_profile(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn state_round_trip() {
        let p = NeuronProfile::from_bounds(vec![0.0; 70], vec![1.0; 70], 3).unwrap();
        let mut s = CoverageState::for_profile(&p);
        let values: Vec<f32> = (0..70).map(|i| (i as f32 - 5.0) / 50.0).collect();
        s.update(
            &p,
            &ActivationTrace {
                values,
                logits: vec![],
                output: vec![],
                predicted_label: 0,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_state(&s, &mut buf).unwrap();
        assert_eq!(read_state(&mut buf.as_slice()).unwrap(), s);
        buf.extend_from_slice(&[0; 8]);
        assert!(read_state(&mut buf.as_slice()).is_err());
    }
}
