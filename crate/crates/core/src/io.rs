//! File formats.
//!
//! * Matrices: `FSK1` binary (magic, `u32` rows, `u32` cols, row-major
//!   little-endian `f64`) or header-less CSV.
//! * Sketches, models and worker summaries: an `FSK1` matrix plus a JSON
//!   sidecar at `<path>.json`.
//! * Binary codes: `FSKC` header (magic, `u32` n, `u32` bits, 4 reserved
//!   bytes) followed by one `⌈bits/8⌉`-byte row per code, bit `k` at byte
//!   `k / 8`, position `k % 8`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributed::WorkerSummary;
use crate::error::{Error, Result};
use crate::fd::SketchState;
use crate::ffd::FfdSketcher;
use crate::hashing::{BinaryCodes, HashModel};
use crate::matrix::DenseMatrix;

pub const MATRIX_MAGIC: &[u8; 4] = b"FSK1";
pub const CODES_MAGIC: &[u8; 4] = b"FSKC";
const HEADER_LEN: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Fsk1,
    Csv,
}

impl MatrixFormat {
    /// CSV for a `.csv` extension, `FSK1` otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Fsk1,
        }
    }
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

/// Reads exactly `buf.len()` bytes, reporting a short read at `offset`.
fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: u64, what: &str) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => return Err(format_err(offset + filled as u64, format!("unexpected end of file in {what}"))),
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

pub fn write_matrix<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::invalid("too many rows for FSK1"))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::invalid("too many columns for FSK1"))?;
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Incremental `FSK1` reader that hands out row blocks.
pub struct Fsk1Reader<R> {
    inner: R,
    rows: usize,
    cols: usize,
    consumed: usize,
}

impl<R: Read> Fsk1Reader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN as usize];
        read_exact_at(&mut inner, &mut header[..4], 0, "magic")?;
        if &header[..4] != MATRIX_MAGIC {
            return Err(format_err(0, format!("bad magic {:?}, expected \"FSK1\"", &header[..4])));
        }
        read_exact_at(&mut inner, &mut header[4..], 4, "header")?;
        let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        Ok(Self {
            inner,
            rows,
            cols,
            consumed: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn remaining(&self) -> usize {
        self.rows - self.consumed
    }

    /// Next block of up to `max_rows` rows, `None` once everything was read.
    pub fn next_block(&mut self, max_rows: usize) -> Result<Option<DenseMatrix>> {
        let take = max_rows.min(self.remaining());
        if take == 0 {
            return Ok(None);
        }
        let start = HEADER_LEN + (self.consumed * self.cols * 8) as u64;
        let mut bytes = vec![0u8; take * self.cols * 8];
        read_exact_at(&mut self.inner, &mut bytes, start, "matrix data")?;
        let mut data = Vec::with_capacity(take * self.cols);
        for (i, c) in bytes.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(format_err(start + 8 * i as u64, "non-finite value"));
            }
            data.push(v);
        }
        self.consumed += take;
        Ok(Some(DenseMatrix::from_parts(take, self.cols, data)))
    }
}

pub fn read_matrix<R: Read>(r: R) -> Result<DenseMatrix> {
    let mut reader = Fsk1Reader::new(r)?;
    let (rows, cols) = (reader.rows(), reader.cols());
    let m = reader.next_block(rows)?.unwrap_or_else(|| DenseMatrix::zeros(0, cols));
    let mut probe = [0u8; 1];
    let end = HEADER_LEN + (rows * cols * 8) as u64;
    if reader.inner.read(&mut probe)? != 0 {
        return Err(format_err(end, "trailing bytes after matrix data"));
    }
    Ok(m)
}

pub fn write_csv<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<DenseMatrix> {
    let mut reader = BufReader::new(r);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    let mut offset = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if !trimmed.trim().is_empty() {
            let mut field_offset = offset;
            let mut count = 0;
            for field in trimmed.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| format_err(field_offset, format!("cannot parse {field:?} as a number")))?;
                if !v.is_finite() {
                    return Err(format_err(field_offset, "non-finite value"));
                }
                data.push(v);
                count += 1;
                field_offset += field.len() as u64 + 1;
            }
            match cols {
                None => cols = Some(count),
                Some(c) if c != count => {
                    return Err(format_err(offset, format!("row {rows} has {count} fields, expected {c}")));
                }
                _ => {}
            }
            rows += 1;
        }
        offset += n as u64;
    }
    Ok(DenseMatrix::from_parts(rows, cols.unwrap_or(0), data))
}

pub fn save_matrix(m: &DenseMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        MatrixFormat::Fsk1 => write_matrix(&mut w, m)?,
        MatrixFormat::Csv => write_csv(&mut w, m)?,
    }
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DenseMatrix> {
    let r = BufReader::new(File::open(path)?);
    match format {
        MatrixFormat::Fsk1 => read_matrix(r),
        MatrixFormat::Csv => read_csv(r),
    }
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// JSON sidecar of a sketch checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchMeta {
    pub kind: String,
    pub ell: usize,
    pub d: usize,
    pub occupied: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<Vec<Vec<f64>>>,
}

pub fn save_sketch(state: &SketchState, path: &Path) -> Result<()> {
    save_matrix(state.matrix(), path, MatrixFormat::Fsk1)?;
    write_json(
        &sidecar_path(path),
        &SketchMeta {
            kind: "fd".into(),
            ell: state.ell(),
            d: state.cols(),
            occupied: state.occupied(),
            m: None,
            trial: None,
            seed: None,
            buffer: None,
        },
    )
}

fn load_sketch_parts(path: &Path) -> Result<(SketchState, SketchMeta)> {
    let meta: SketchMeta = read_json(&sidecar_path(path))?;
    let b = load_matrix(path, MatrixFormat::Fsk1)?;
    if b.shape() != (meta.ell, meta.d) {
        return Err(Error::invalid(format!(
            "sketch matrix is {}x{} but sidecar says {}x{}",
            b.rows(),
            b.cols(),
            meta.ell,
            meta.d
        )));
    }
    let state = SketchState::from_matrix(b)?;
    if state.occupied() > meta.occupied {
        return Err(Error::invalid("sketch has non-zero rows beyond the recorded occupancy"));
    }
    Ok((state, meta))
}

pub fn load_sketch(path: &Path) -> Result<SketchState> {
    load_sketch_parts(path).map(|(s, _)| s)
}

pub fn save_ffd(sk: &FfdSketcher, path: &Path) -> Result<()> {
    save_matrix(sk.sketch().matrix(), path, MatrixFormat::Fsk1)?;
    let pending = sk.pending();
    write_json(
        &sidecar_path(path),
        &SketchMeta {
            kind: "ffd".into(),
            ell: sk.ell(),
            d: sk.cols(),
            occupied: sk.sketch().occupied(),
            m: Some(sk.buffer_rows()),
            trial: Some(sk.trial()),
            seed: Some(sk.seed()),
            buffer: Some(pending.row_iter().map(<[f64]>::to_vec).collect()),
        },
    )
}

pub fn load_ffd(path: &Path) -> Result<FfdSketcher> {
    let (state, meta) = load_sketch_parts(path)?;
    let (Some(m), Some(trial), Some(seed)) = (meta.m, meta.trial, meta.seed) else {
        return Err(Error::invalid("sidecar lacks ffd fields m, trial and seed"));
    };
    let rows = meta.buffer.unwrap_or_default();
    let buffered = if rows.is_empty() {
        DenseMatrix::zeros(0, meta.d)
    } else {
        DenseMatrix::from_rows(&rows)?
    };
    FfdSketcher::from_parts(state, m, buffered, trial, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub bits: usize,
    pub d: usize,
    pub mu: Vec<f64>,
}

pub fn save_model(model: &HashModel, path: &Path) -> Result<()> {
    save_matrix(model.projection(), path, MatrixFormat::Fsk1)?;
    write_json(
        &sidecar_path(path),
        &ModelMeta {
            bits: model.bits(),
            d: model.dim(),
            mu: model.center().to_vec(),
        },
    )
}

pub fn load_model(path: &Path) -> Result<HashModel> {
    let meta: ModelMeta = read_json(&sidecar_path(path))?;
    let w = load_matrix(path, MatrixFormat::Fsk1)?;
    if w.shape() != (meta.d, meta.bits) {
        return Err(Error::invalid(format!(
            "projection is {}x{} but sidecar says {}x{}",
            w.rows(),
            w.cols(),
            meta.d,
            meta.bits
        )));
    }
    HashModel::new(w, meta.mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMeta {
    pub worker_id: usize,
    pub count: u64,
    pub ell: usize,
    pub d: usize,
    pub mean: Vec<f64>,
}

pub fn save_summary(s: &WorkerSummary, path: &Path) -> Result<()> {
    save_matrix(&s.sketch, path, MatrixFormat::Fsk1)?;
    write_json(
        &sidecar_path(path),
        &SummaryMeta {
            worker_id: s.worker_id,
            count: s.count,
            ell: s.sketch.rows(),
            d: s.sketch.cols(),
            mean: s.mean.clone(),
        },
    )
}

pub fn load_summary(path: &Path) -> Result<WorkerSummary> {
    let meta: SummaryMeta = read_json(&sidecar_path(path))?;
    let sketch = load_matrix(path, MatrixFormat::Fsk1)?;
    if sketch.shape() != (meta.ell, meta.d) || meta.mean.len() != meta.d {
        return Err(Error::invalid("summary sidecar does not match its sketch"));
    }
    Ok(WorkerSummary {
        sketch,
        mean: meta.mean,
        count: meta.count,
        worker_id: meta.worker_id,
    })
}

pub fn write_codes<W: Write>(w: &mut W, codes: &BinaryCodes) -> Result<()> {
    let n = u32::try_from(codes.len()).map_err(|_| Error::invalid("too many codes"))?;
    let bits = u32::try_from(codes.bits()).map_err(|_| Error::invalid("code too long"))?;
    w.write_all(CODES_MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&bits.to_le_bytes())?;
    w.write_all(&[0u8; 4])?;
    let row_bytes = codes.bits().div_ceil(8);
    for i in 0..codes.len() {
        let bytes: Vec<u8> = codes.code(i).iter().flat_map(|word| word.to_le_bytes()).take(row_bytes).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_codes<R: Read>(mut r: R) -> Result<BinaryCodes> {
    let mut header = [0u8; 16];
    read_exact_at(&mut r, &mut header, 0, "codes header")?;
    if &header[..4] != CODES_MAGIC {
        return Err(format_err(0, "bad magic, expected \"FSKC\""));
    }
    let n = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let bits = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let row_bytes = bits.div_ceil(8);
    let mut codes = BinaryCodes::zeros(n, bits);
    let mut row = vec![0u8; row_bytes];
    for i in 0..n {
        let offset = 16 + (i * row_bytes) as u64;
        read_exact_at(&mut r, &mut row, offset, "code rows")?;
        for k in 0..bits {
            if row[k / 8] >> (k % 8) & 1 == 1 {
                codes.set(i, k);
            }
        }
        if bits % 8 != 0 && row[row_bytes - 1] >> (bits % 8) != 0 {
            return Err(format_err(offset + row_bytes as u64 - 1, "non-zero padding bits"));
        }
    }
    Ok(codes)
}

pub fn save_codes(codes: &BinaryCodes, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_codes(&mut w, codes)?;
    w.flush()?;
    Ok(())
}

pub fn load_codes(path: &Path) -> Result<BinaryCodes> {
    read_codes(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, seeded_rng};
    use proptest::prelude::*;

    fn fsk1_bytes(m: &DenseMatrix) -> Vec<u8> {
        let mut buf = Vec::new();
        write_matrix(&mut buf, m).unwrap();
        buf
    }

    #[test]
    fn fsk1_layout() {
        let m = DenseMatrix::from_rows(&[[1.0, -2.5]]).unwrap();
        let b = fsk1_bytes(&m);
        assert_eq!(&b[..4], b"FSK1");
        assert_eq!(&b[4..12], &[1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&b[12..20], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 28);
    }

    #[test]
    fn fsk1_errors_carry_offsets() {
        let m = gaussian_matrix(2, 2, &mut seeded_rng(1));
        let mut b = fsk1_bytes(&m);
        b[0] = b'X';
        assert!(matches!(read_matrix(&b[..]), Err(Error::Format { offset: 0, .. })));

        let b = fsk1_bytes(&m);
        assert!(matches!(read_matrix(&b[..7]), Err(Error::Format { offset: 7, .. })));
        assert!(matches!(read_matrix(&b[..20]), Err(Error::Format { offset: 20, .. })));

        let mut b = fsk1_bytes(&m);
        b.push(0);
        assert!(matches!(read_matrix(&b[..]), Err(Error::Format { offset: 44, .. })));

        let mut b = fsk1_bytes(&m);
        b[20..28].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(read_matrix(&b[..]), Err(Error::Format { offset: 20, .. })));
    }

    #[test]
    fn block_reader_streams_rows() {
        let m = gaussian_matrix(10, 3, &mut seeded_rng(2));
        let bytes = fsk1_bytes(&m);
        let mut r = Fsk1Reader::new(&bytes[..]).unwrap();
        let mut blocks = Vec::new();
        while let Some(b) = r.next_block(4).unwrap() {
            blocks.push(b);
        }
        assert_eq!(blocks.iter().map(|b| b.rows()).collect::<Vec<_>>(), vec![4, 4, 2]);
        let refs: Vec<&DenseMatrix> = blocks.iter().collect();
        assert_eq!(DenseMatrix::vstack(&refs).unwrap(), m);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(read_csv("1,2\n3,x\n".as_bytes()), Err(Error::Format { offset: 6, .. })));
        assert!(matches!(read_csv("1,2\n3\n".as_bytes()), Err(Error::Format { offset: 4, .. })));
        assert_eq!(read_csv("1, 2\n\n3,4\n".as_bytes()).unwrap().shape(), (2, 2));
    }

    #[test]
    fn codes_layout_and_round_trip() {
        let mut c = BinaryCodes::zeros(2, 10);
        c.set(0, 0);
        c.set(1, 9);
        let mut buf = Vec::new();
        write_codes(&mut buf, &c).unwrap();
        assert_eq!(&buf[..4], b"FSKC");
        assert_eq!(buf.len(), 16 + 2 * 2);
        assert_eq!(&buf[16..], &[1, 0, 0, 2]);
        assert_eq!(read_codes(&buf[..]).unwrap(), c);
        let mut bad = buf.clone();
        bad[19] |= 0x80;
        assert!(read_codes(&bad[..]).is_err());
    }

    proptest! {
        #[test]
        fn fsk1_round_trip_is_bit_exact(rows in 0usize..20, cols in 1usize..20, seed in any::<u64>()) {
            let m = gaussian_matrix(rows, cols, &mut seeded_rng(seed)).scale(1e3);
            let back = read_matrix(&fsk1_bytes(&m)[..]).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn csv_round_trip_is_exact(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
            let m = gaussian_matrix(rows, cols, &mut seeded_rng(seed)).scale(1e-3);
            let mut buf = Vec::new();
            write_csv(&mut buf, &m).unwrap();
            prop_assert_eq!(read_csv(&buf[..]).unwrap(), m);
        }
    }
}
