//! Plain EDF (European Data Format) reading, plus a small writer used by the
//! synthetic-data generator and the tests.
//!
//! Layout: a 256-byte ASCII header, `256 * ns` bytes of per-signal headers
//! stored field-major, then data records holding `samples_per_record[i]`
//! little-endian `i16` values for each signal in turn.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::warn;

use super::Recording;
use crate::error::{Error, Result};

const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;

/// Per-signal field widths, in file order.
const SIGNAL_FIELDS: [usize; 10] = [16, 80, 8, 8, 8, 8, 8, 80, 8, 32];

#[derive(Debug, Clone, PartialEq)]
pub struct EdfSignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefilter: String,
    pub samples_per_record: usize,
}

impl EdfSignalHeader {
    fn scale(&self) -> f64 {
        (self.physical_max - self.physical_min) / f64::from(self.digital_max - self.digital_min)
    }

    /// Map a stored digital value to its physical value.
    pub fn to_physical(&self, digital: i16) -> f64 {
        (f64::from(digital) - f64::from(self.digital_min)) * self.scale() + self.physical_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient: String,
    pub recording: String,
    pub start_date: String,
    pub start_time: String,
    pub header_bytes: usize,
    pub num_records: i64,
    pub record_duration: f64,
    pub signals: Vec<EdfSignalHeader>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn field(&mut self, width: usize, what: &str) -> Result<(usize, &'a str)> {
        let start = self.pos;
        let end = start + width;
        if end > self.bytes.len() {
            return Err(Error::Edf {
                offset: start as u64,
                message: format!("truncated header while reading {what}"),
            });
        }
        self.pos = end;
        let text = std::str::from_utf8(&self.bytes[start..end]).map_err(|_| Error::Edf {
            offset: start as u64,
            message: format!("{what} is not ASCII"),
        })?;
        Ok((start, text.trim()))
    }

    fn text(&mut self, width: usize, what: &str) -> Result<String> {
        Ok(self.field(width, what)?.1.to_string())
    }

    fn number<T: std::str::FromStr>(&mut self, width: usize, what: &str) -> Result<T> {
        let (offset, text) = self.field(width, what)?;
        parse_number(text, offset, what)
    }
}

fn parse_number<T: std::str::FromStr>(text: &str, offset: usize, what: &str) -> Result<T> {
    text.parse().map_err(|_| Error::Edf {
        offset: offset as u64,
        message: format!("{what} is not numeric: {text:?}"),
    })
}

fn parse_header(bytes: &[u8]) -> Result<EdfHeader> {
    let mut cur = Cursor { bytes, pos: 0 };
    let version = cur.text(8, "version")?;
    let patient = cur.text(80, "patient id")?;
    let recording = cur.text(80, "recording id")?;
    let start_date = cur.text(8, "start date")?;
    let start_time = cur.text(8, "start time")?;
    let header_bytes: usize = cur.number(8, "header byte count")?;
    cur.field(44, "reserved")?;
    let num_records: i64 = cur.number(8, "number of data records")?;
    let record_duration: f64 = cur.number(8, "data record duration")?;
    let ns: usize = cur.number(4, "signal count")?;

    let expected = FIXED_HEADER + SIGNAL_HEADER * ns;
    if bytes.len() < expected {
        return Err(Error::Edf {
            offset: bytes.len() as u64,
            message: format!("truncated header: {ns} signals need {expected} header bytes"),
        });
    }

    // Signal headers are stored field-major: all labels, then all transducers, ...
    let mut columns: Vec<Vec<(usize, String)>> = Vec::with_capacity(SIGNAL_FIELDS.len());
    for (f, &width) in SIGNAL_FIELDS.iter().enumerate() {
        let mut col = Vec::with_capacity(ns);
        for s in 0..ns {
            let (offset, text) = cur.field(width, &format!("signal {s} field {f}"))?;
            col.push((offset, text.to_string()));
        }
        columns.push(col);
    }

    let mut signals = Vec::with_capacity(ns);
    for s in 0..ns {
        let num = |f: usize, what: &str| -> Result<f64> {
            let (offset, ref text) = columns[f][s];
            parse_number(text, offset, &format!("signal {s} {what}"))
        };
        let digital_min = num(5, "digital minimum")?;
        let digital_max = num(6, "digital maximum")?;
        if digital_max == digital_min {
            return Err(Error::Edf {
                offset: columns[5][s].0 as u64,
                message: format!("signal {s} has a zero-width digital range ({digital_min})"),
            });
        }
        let spr = num(8, "samples per record")?;
        if spr < 0.0 || spr.fract() != 0.0 {
            return Err(Error::Edf {
                offset: columns[8][s].0 as u64,
                message: format!("signal {s} samples per record is not a count: {spr}"),
            });
        }
        signals.push(EdfSignalHeader {
            label: columns[0][s].1.clone(),
            transducer: columns[1][s].1.clone(),
            physical_dimension: columns[2][s].1.clone(),
            physical_min: num(3, "physical minimum")?,
            physical_max: num(4, "physical maximum")?,
            digital_min: digital_min as i32,
            digital_max: digital_max as i32,
            prefilter: columns[7][s].1.clone(),
            samples_per_record: spr as usize,
        });
    }

    Ok(EdfHeader {
        version,
        patient,
        recording,
        start_date,
        start_time,
        header_bytes,
        num_records,
        record_duration,
        signals,
    })
}

fn microvolt_factor(dimension: &str) -> f64 {
    match dimension.trim().to_ascii_lowercase().as_str() {
        "mv" => 1e3,
        "v" => 1e6,
        "nv" => 1e-3,
        _ => 1.0,
    }
}

/// Read an EDF file into a [`Recording`] of microvolt series.
///
/// Annotation signals are skipped, as are signals whose samples-per-record
/// differs from the dominant EEG rate (a warning names them).
pub fn read_edf(path: impl AsRef<Path>) -> Result<Recording> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_edf_bytes(&bytes, &id)
}

pub fn read_edf_bytes(bytes: &[u8], recording_id: &str) -> Result<Recording> {
    let header = parse_header(bytes)?;
    if header.record_duration <= 0.0 {
        return Err(Error::Edf {
            offset: 244,
            message: format!("data record duration must be positive, got {}", header.record_duration),
        });
    }
    let data_start = FIXED_HEADER + SIGNAL_HEADER * header.signals.len();
    let record_len: usize = header.signals.iter().map(|s| s.samples_per_record * 2).sum();
    if record_len == 0 {
        return Err(Error::Edf {
            offset: data_start as u64,
            message: "no samples per data record".into(),
        });
    }
    let available = (bytes.len() - data_start) / record_len;
    let num_records = if header.num_records < 0 {
        available
    } else {
        let n = header.num_records as usize;
        if n > available {
            return Err(Error::Edf {
                offset: bytes.len() as u64,
                message: format!("header declares {n} data records but only {available} are present"),
            });
        }
        n
    };

    let eeg: Vec<usize> = (0..header.signals.len())
        .filter(|&i| !header.signals[i].label.eq_ignore_ascii_case("EDF Annotations"))
        .collect();
    let mut rate_votes: HashMap<usize, usize> = HashMap::new();
    for &i in &eeg {
        *rate_votes.entry(header.signals[i].samples_per_record).or_default() += 1;
    }
    let dominant = rate_votes
        .iter()
        .max_by_key(|(spr, count)| (**count, **spr))
        .map(|(spr, _)| *spr)
        .ok_or_else(|| Error::Edf {
            offset: 252,
            message: "file contains no signal channels".into(),
        })?;
    let keep: Vec<usize> = eeg
        .into_iter()
        .filter(|&i| {
            let ok = header.signals[i].samples_per_record == dominant;
            if !ok {
                warn!(
                    "{recording_id}: dropping signal {:?} ({} samples/record, dominant is {dominant})",
                    header.signals[i].label, header.signals[i].samples_per_record
                );
            }
            ok
        })
        .collect();

    // Byte offset of each signal inside a data record.
    let mut offsets = Vec::with_capacity(header.signals.len());
    let mut acc = 0;
    for s in &header.signals {
        offsets.push(acc);
        acc += s.samples_per_record * 2;
    }

    let mut samples: Vec<Vec<f64>> = keep.iter().map(|_| Vec::with_capacity(num_records * dominant)).collect();
    for r in 0..num_records {
        let base = data_start + r * record_len;
        for (out, &sig) in samples.iter_mut().zip(&keep) {
            let h = &header.signals[sig];
            let unit = microvolt_factor(&h.physical_dimension);
            let start = base + offsets[sig];
            for k in 0..h.samples_per_record {
                let b = start + 2 * k;
                let digital = i16::from_le_bytes([bytes[b], bytes[b + 1]]);
                out.push(h.to_physical(digital) * unit);
            }
        }
    }

    let patient_id = header.patient.split_whitespace().next().unwrap_or("").to_string();
    Recording::new(
        patient_id,
        recording_id,
        dominant as f64 / header.record_duration,
        keep.iter().map(|&i| header.signals[i].label.clone()).collect(),
        samples,
    )
}

#[derive(Debug, Clone)]
pub struct EdfWriteOptions {
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i16,
    pub digital_max: i16,
    /// Seconds per data record; `rate * record_duration` must be a whole number.
    pub record_duration: f64,
}

impl Default for EdfWriteOptions {
    fn default() -> Self {
        Self {
            physical_min: -1000.0,
            physical_max: 1000.0,
            digital_min: -32768,
            digital_max: 32767,
            record_duration: 1.0,
        }
    }
}

fn push_field(buf: &mut Vec<u8>, text: &str, width: usize) {
    let bytes = text.as_bytes();
    let n = bytes.len().min(width);
    buf.extend_from_slice(&bytes[..n]);
    buf.extend(std::iter::repeat_n(b' ', width - n));
}

fn format_number(x: f64, width: usize) -> String {
    let plain = format!("{x}");
    if plain.len() <= width {
        return plain;
    }
    for prec in (0..width).rev() {
        let s = format!("{x:.prec$}");
        if s.len() <= width {
            return s;
        }
    }
    format!("{}", x.round() as i64)
}

/// Write `rec` as a plain EDF file with 16-bit samples. Values outside the
/// physical range are clipped; a partial last record is padded with the
/// final sample.
pub fn write_edf(path: impl AsRef<Path>, rec: &Recording, opts: &EdfWriteOptions) -> Result<()> {
    let path = path.as_ref();
    let spr_f = rec.native_rate * opts.record_duration;
    if (spr_f - spr_f.round()).abs() > 1e-9 || spr_f < 1.0 {
        return Err(Error::invalid(format!(
            "rate {} Hz times record duration {} s is not a whole sample count",
            rec.native_rate, opts.record_duration
        )));
    }
    if opts.digital_max <= opts.digital_min || opts.physical_max <= opts.physical_min {
        return Err(Error::invalid("EDF ranges must be increasing"));
    }
    let spr = spr_f.round() as usize;
    let ns = rec.channel_count();
    let n = rec.sample_count();
    let num_records = n.div_ceil(spr);

    let mut buf = Vec::with_capacity(FIXED_HEADER + SIGNAL_HEADER * ns + num_records * spr * ns * 2);
    push_field(&mut buf, "0", 8);
    push_field(&mut buf, &rec.patient_id, 80);
    push_field(&mut buf, &rec.recording_id, 80);
    push_field(&mut buf, "01.01.20", 8);
    push_field(&mut buf, "00.00.00", 8);
    push_field(&mut buf, &(FIXED_HEADER + SIGNAL_HEADER * ns).to_string(), 8);
    push_field(&mut buf, "", 44);
    push_field(&mut buf, &num_records.to_string(), 8);
    push_field(&mut buf, &format_number(opts.record_duration, 8), 8);
    push_field(&mut buf, &ns.to_string(), 4);

    let fields: [Box<dyn Fn(usize) -> String>; 10] = [
        Box::new(|i| rec.electrode_labels[i].clone()),
        Box::new(|_| "AgAgCl electrode".into()),
        Box::new(|_| "uV".into()),
        Box::new(|_| format_number(opts.physical_min, 8)),
        Box::new(|_| format_number(opts.physical_max, 8)),
        Box::new(|_| opts.digital_min.to_string()),
        Box::new(|_| opts.digital_max.to_string()),
        Box::new(|_| String::new()),
        Box::new(|_| spr.to_string()),
        Box::new(|_| String::new()),
    ];
    for (field, &width) in fields.iter().zip(SIGNAL_FIELDS.iter()) {
        for i in 0..ns {
            push_field(&mut buf, &field(i), width);
        }
    }

    let dig_span = f64::from(opts.digital_max) - f64::from(opts.digital_min);
    let phys_span = opts.physical_max - opts.physical_min;
    for r in 0..num_records {
        for ch in &rec.samples {
            for k in 0..spr {
                let idx = (r * spr + k).min(n.saturating_sub(1));
                let phys = ch.get(idx).copied().unwrap_or(0.0);
                let d = ((phys - opts.physical_min) / phys_span * dig_span + f64::from(opts.digital_min)).round();
                let d = d.clamp(f64::from(opts.digital_min), f64::from(opts.digital_max)) as i16;
                buf.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_channel(rate: f64, seconds: f64) -> Recording {
        let n = (rate * seconds) as usize;
        let a: Vec<f64> = (0..n).map(|i| 100.0 * (i as f64 * 0.1).sin()).collect();
        let b: Vec<f64> = (0..n).map(|i| -50.0 + (i % 17) as f64).collect();
        Recording::new("pat01", "rec", rate, vec!["EEG FP1-REF".into(), "EEG F7-REF".into()], vec![a, b]).unwrap()
    }

    fn encode(rec: &Recording, opts: &EdfWriteOptions) -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.edf");
        write_edf(&p, rec, opts).unwrap();
        fs::read(p).unwrap()
    }

    #[test]
    fn round_trip_within_quantization() {
        let rec = two_channel(256.0, 10.0);
        let opts = EdfWriteOptions::default();
        let bytes = encode(&rec, &opts);
        let back = read_edf_bytes(&bytes, "rec").unwrap();
        assert_eq!(back.native_rate, 256.0);
        assert_eq!(back.channel_count(), 2);
        assert_eq!(back.sample_count(), 2560);
        assert_eq!(back.patient_id, "pat01");
        let step = (opts.physical_max - opts.physical_min) / 65535.0;
        for (x, y) in rec.samples.iter().flatten().zip(back.samples.iter().flatten()) {
            assert!((x - y).abs() <= step, "{x} vs {y}");
        }
    }

    #[test]
    fn signal_count_field_matches_raw_bytes() {
        let rec = two_channel(64.0, 2.0);
        let bytes = encode(&rec, &EdfWriteOptions::default());
        // Independent read of the fixed-header field.
        let raw = std::str::from_utf8(&bytes[252..256]).unwrap();
        assert_eq!(raw, "2   ");
        let header = parse_header(&bytes).unwrap();
        assert_eq!(header.signals.len(), raw.trim().parse::<usize>().unwrap());
    }

    #[test]
    fn digital_min_maps_to_physical_min() {
        let h = EdfSignalHeader {
            label: "X".into(),
            transducer: String::new(),
            physical_dimension: "uV".into(),
            physical_min: -100.0,
            physical_max: 100.0,
            digital_min: -2048,
            digital_max: 2047,
            prefilter: String::new(),
            samples_per_record: 1,
        };
        assert_eq!(h.to_physical(-2048), -100.0);
        assert_eq!(h.to_physical(2047), 100.0);
    }

    #[test]
    fn truncated_header_reports_offset() {
        let rec = two_channel(64.0, 1.0);
        let bytes = encode(&rec, &EdfWriteOptions::default());
        match read_edf_bytes(&bytes[..100], "x") {
            Err(Error::Edf { offset, .. }) => assert_eq!(offset, 88),
            other => panic!("expected EDF error, got {other:?}"),
        }
        match read_edf_bytes(&bytes[..300], "x") {
            Err(Error::Edf { message, .. }) => assert!(message.contains("truncated")),
            other => panic!("expected EDF error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_reports_offset() {
        let rec = two_channel(64.0, 1.0);
        let mut bytes = encode(&rec, &EdfWriteOptions::default());
        bytes[252..256].copy_from_slice(b"ab  ");
        match read_edf_bytes(&bytes, "x") {
            Err(Error::Edf { offset, message }) => {
                assert_eq!(offset, 252);
                assert!(message.contains("signal count"));
            }
            other => panic!("expected EDF error, got {other:?}"),
        }
    }

    #[test]
    fn zero_width_digital_range_is_rejected() {
        let rec = two_channel(64.0, 1.0);
        let mut bytes = encode(&rec, &EdfWriteOptions::default());
        // digital max of signal 1 := digital min of signal 1
        let ns = 2;
        let dig_min_col = 256 + ns * (16 + 80 + 8 + 8 + 8);
        let dig_max_col = dig_min_col + ns * 8;
        let min_field: Vec<u8> = bytes[dig_min_col + 8..dig_min_col + 16].to_vec();
        bytes[dig_max_col + 8..dig_max_col + 16].copy_from_slice(&min_field);
        match read_edf_bytes(&bytes, "x") {
            Err(Error::Edf { offset, message }) => {
                assert_eq!(offset as usize, dig_min_col + 8);
                assert!(message.contains("zero-width"));
            }
            other => panic!("expected EDF error, got {other:?}"),
        }
    }

    #[test]
    fn millivolt_signals_are_converted() {
        let rec = two_channel(8.0, 1.0);
        let mut bytes = encode(&rec, &EdfWriteOptions::default());
        let dim_col = 256 + 2 * (16 + 80);
        bytes[dim_col..dim_col + 8].copy_from_slice(b"mV      ");
        let back = read_edf_bytes(&bytes, "x").unwrap();
        let plain = read_edf_bytes(&encode(&rec, &EdfWriteOptions::default()), "x").unwrap();
        assert!((back.samples[0][3] - 1000.0 * plain.samples[0][3]).abs() < 1e-9);
    }
}
