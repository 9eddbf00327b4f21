//! WAV, manifest, alignment and TV file readers and writers.
//!
//! Manifest: one record per line,
//! `<id>\t<wav-path>\t<transcription>[\t<align-path>][\t<tv-path>]`.
//! Relative paths resolve against the manifest's directory. Blank lines and
//! lines starting with `#` are skipped. A trailing field ending in `.tv` is a
//! TV path; anything else in the fourth column is an alignment path.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::lexicon::{self, TV_COUNT};
use super::synth::{TvTrajectory, Utterance};
use super::SAMPLE_RATE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub audio: PathBuf,
    pub transcription: Vec<String>,
    pub alignment: Option<PathBuf>,
    pub tv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub label_inventory: Vec<String>,
}

/// Reads a 16-bit PCM mono WAV as samples in [-1, 1).
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {}-bit {:?}, only 16-bit PCM is supported",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if samples.is_empty() {
        return Err(Error::Degenerate(format!("{}: empty data chunk", path.display())));
    }
    Ok((samples, spec.sample_rate))
}

pub fn write_wav(path: &Path, samples: &[f32], rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v)?;
    }
    w.finalize()?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=5).contains(&fields.len()) {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 3 to 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(parse_err(path, lineno, "empty id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateId(id.to_string()));
        }
        if fields[1].trim().is_empty() {
            return Err(parse_err(path, lineno, "empty wav path"));
        }
        let audio = resolve(base, fields[1].trim());
        let transcription = fields[2].split_whitespace().map(str::to_string).collect();
        let (mut alignment, mut tv) = (None, None);
        for extra in &fields[3..] {
            let extra = extra.trim();
            if extra.is_empty() {
                continue;
            }
            if extra.ends_with(".tv") {
                tv = Some(resolve(base, extra));
            } else if alignment.is_none() {
                alignment = Some(resolve(base, extra));
            } else {
                return Err(parse_err(path, lineno, format!("unrecognized field `{extra}`")));
            }
        }
        for p in [Some(&audio), alignment.as_ref(), tv.as_ref()].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::NotFound(p.clone()));
            }
        }
        entries.push(ManifestEntry {
            id: id.to_string(),
            audio,
            transcription,
            alignment,
            tv,
        });
    }
    Ok(Manifest {
        entries,
        label_inventory: lexicon::label_inventory(),
    })
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| -> String {
        p.strip_prefix(base).unwrap_or(p).display().to_string()
    };
    let mut w = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        write!(w, "{}\t{}\t{}", e.id, rel(&e.audio), e.transcription.join(" "))?;
        if let Some(a) = &e.alignment {
            write!(w, "\t{}", rel(a))?;
        }
        if let Some(t) = &e.tv {
            write!(w, "\t{}", rel(t))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_alignment(path: &Path) -> Result<Vec<usize>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        out.push(
            t.parse::<usize>()
                .map_err(|e| parse_err(path, i + 1, format!("bad label `{t}`: {e}")))?,
        );
    }
    Ok(out)
}

pub fn write_alignment(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tv_file(path: &Path) -> Result<TvTrajectory> {
    let f = fs::File::open(path)?;
    let mut frames = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split('\t')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, i + 1, format!("bad TV value: {e}")))?;
        if vals.len() != TV_COUNT {
            return Err(parse_err(path, i + 1, format!("expected {TV_COUNT} values, found {}", vals.len())));
        }
        frames.push(std::array::from_fn(|k| vals[k]));
    }
    TvTrajectory::new(frames)
}

pub fn write_tv_file(path: &Path, tv: &TvTrajectory) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for f in &tv.frames {
        let row: Vec<String> = f.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join("\t"))?;
    }
    w.flush()?;
    Ok(())
}

/// Loads every manifest entry as an utterance. Audio must be 16 kHz.
pub fn load_utterances(manifest: &Manifest) -> Result<Vec<Utterance>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let (samples, rate) = read_wav(&e.audio)?;
            if rate != SAMPLE_RATE as u32 {
                return Err(Error::UnsupportedFormat(format!(
                    "{}: sample rate {rate} Hz, expected {SAMPLE_RATE} (no resampling)",
                    e.audio.display()
                )));
            }
            let frame_labels = e.alignment.as_deref().map(read_alignment).transpose()?;
            let tv_truth = e.tv.as_deref().map(read_tv_file).transpose()?;
            let u = Utterance {
                id: e.id.clone(),
                samples,
                transcription: e.transcription.clone(),
                frame_labels,
                tv_truth,
            };
            u.validate(manifest.label_inventory.len())?;
            Ok(u)
        })
        .collect()
}

/// Writes utterances as WAV + alignment + TV files plus `manifest.tsv` in `dir`.
pub fn write_corpus(dir: &Path, utts: &[Utterance]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(utts.len());
    for u in utts {
        let audio = dir.join(format!("{}.wav", u.id));
        write_wav(&audio, &u.samples, SAMPLE_RATE as u32)?;
        let alignment = match &u.frame_labels {
            Some(l) => {
                let p = dir.join(format!("{}.ali", u.id));
                write_alignment(&p, l)?;
                Some(p)
            }
            None => None,
        };
        let tv = match &u.tv_truth {
            Some(t) => {
                let p = dir.join(format!("{}.tv", u.id));
                write_tv_file(&p, t)?;
                Some(p)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            id: u.id.clone(),
            audio,
            transcription: u.transcription.clone(),
            alignment,
            tv,
        });
    }
    let path = dir.join("manifest.tsv");
    write_manifest(&path, &entries)?;
    Ok(path)
}
