//! Persistence for pair streams, co-occurrence tables, and embeddings.
//!
//! All binary formats are little-endian and identified by a four-byte magic:
//!
//! * pair stream (`RLNA`): magic, `u16` version, then `(u32 center,
//!   u32 context)` records to end of file;
//! * co-occurrence table (`RLNC`): magic, `u16` version, `u8` marginal
//!   convention, `u8` symmetric-storage flag, `u64` total pair count n,
//!   `u32` catalog size, the per-item marginal counts as `u64`s, a `u64`
//!   stored-pair count, then `(u32 i, u32 j, u64 count)` triples;
//! * embedding (`RLNE`): magic, `u32` row count, `u32` dimension, then
//!   row-major `f32` values (the magic itself versions this fixed layout).
//!
//! Text formats: embeddings export to TSV (`item_id<TAB>f1 …<TAB>fd`,
//! optionally naming items through a vocabulary), tables export to
//! `i,j,count,relatedness` CSV, and per-item class labels load from
//! `item_id,label` CSV.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::catalog::{PairStream, Provenance, Vocabulary};
use crate::cooccur::{CooccurrenceTable, RelatednessEstimate, RoleConvention};
use crate::embed::Embedding;

const PAIR_MAGIC: &[u8; 4] = b"RLNA";
const TABLE_MAGIC: &[u8; 4] = b"RLNC";
const EMBEDDING_MAGIC: &[u8; 4] = b"RLNE";

pub const PAIR_STREAM_VERSION: u16 = 1;
pub const TABLE_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic for {expected} file: found {found:?}")]
    BadMagic { expected: &'static str, found: [u8; 4] },
    #[error("unsupported {kind} version {version}")]
    UnsupportedVersion { kind: &'static str, version: u16 },
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("corrupt {kind}: {detail}")]
    Corrupt { kind: &'static str, detail: String },
    #[error("csv failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing label for item {0}")]
    MissingLabel(u32),
}

fn corrupt(kind: &'static str, detail: impl Into<String>) -> IoError {
    IoError::Corrupt {
        kind,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Little-endian cursor
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], IoError> {
        if self.bytes.len() - self.pos < n {
            return Err(IoError::Truncated(what));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &'static [u8; 4], name: &'static str) -> Result<(), IoError> {
        let raw = self.take(4, name)?;
        if raw != expected {
            return Err(IoError::BadMagic {
                expected: name,
                found: [raw[0], raw[1], raw[2], raw[3]],
            });
        }
        Ok(())
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, IoError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &'static str) -> Result<f32, IoError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, IoError> {
        Ok(self.take(1, what)?[0])
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

// ---------------------------------------------------------------------------
// Pair streams
// ---------------------------------------------------------------------------

pub fn encode_pair_stream(stream: &PairStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 2 + stream.len() * 8);
    out.extend_from_slice(PAIR_MAGIC);
    out.extend_from_slice(&PAIR_STREAM_VERSION.to_le_bytes());
    for &(center, context) in stream.pairs() {
        out.extend_from_slice(&center.to_le_bytes());
        out.extend_from_slice(&context.to_le_bytes());
    }
    out
}

/// Decodes a pair stream; files carry no provenance, so the result is
/// tagged [`Provenance::External`].
pub fn decode_pair_stream(bytes: &[u8]) -> Result<PairStream, IoError> {
    let mut cur = Cursor::new(bytes);
    cur.magic(PAIR_MAGIC, "pair stream")?;
    let version = cur.u16("pair stream version")?;
    if version != PAIR_STREAM_VERSION {
        return Err(IoError::UnsupportedVersion {
            kind: "pair stream",
            version,
        });
    }
    if cur.remaining() % 8 != 0 {
        return Err(IoError::Truncated("pair record"));
    }
    let mut pairs = Vec::with_capacity(cur.remaining() / 8);
    while cur.remaining() > 0 {
        let center = cur.u32("pair center")?;
        let context = cur.u32("pair context")?;
        if center == context {
            return Err(corrupt(
                "pair stream",
                format!("self-pair ({center}, {context})"),
            ));
        }
        pairs.push((center, context));
    }
    Ok(PairStream::new(pairs, Provenance::External, 0))
}

pub fn write_pair_stream(path: &Path, stream: &PairStream) -> Result<(), IoError> {
    fs::write(path, encode_pair_stream(stream))?;
    Ok(())
}

pub fn read_pair_stream(path: &Path) -> Result<PairStream, IoError> {
    decode_pair_stream(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Co-occurrence tables
// ---------------------------------------------------------------------------

fn convention_byte(convention: RoleConvention) -> u8 {
    match convention {
        RoleConvention::CenterOnly => 0,
        RoleConvention::BothRoles => 1,
    }
}

pub fn encode_table(table: &CooccurrenceTable) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(TABLE_MAGIC);
    out.extend_from_slice(&TABLE_VERSION.to_le_bytes());
    out.push(convention_byte(table.convention()));
    out.push(table.symmetric() as u8);
    out.extend_from_slice(&table.n().to_le_bytes());
    out.extend_from_slice(&(table.num_items() as u32).to_le_bytes());
    for &count in table.item_counts() {
        out.extend_from_slice(&count.to_le_bytes());
    }
    out.extend_from_slice(&(table.num_stored_pairs() as u64).to_le_bytes());
    for ((i, j), count) in table.pairs() {
        out.extend_from_slice(&i.to_le_bytes());
        out.extend_from_slice(&j.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
    }
    out
}

pub fn decode_table(bytes: &[u8]) -> Result<CooccurrenceTable, IoError> {
    let mut cur = Cursor::new(bytes);
    cur.magic(TABLE_MAGIC, "co-occurrence table")?;
    let version = cur.u16("table version")?;
    if version != TABLE_VERSION {
        return Err(IoError::UnsupportedVersion {
            kind: "co-occurrence table",
            version,
        });
    }
    let convention = match cur.u8("marginal convention")? {
        0 => RoleConvention::CenterOnly,
        1 => RoleConvention::BothRoles,
        other => return Err(corrupt("table", format!("unknown convention byte {other}"))),
    };
    let symmetric = match cur.u8("symmetry flag")? {
        0 => false,
        1 => true,
        other => return Err(corrupt("table", format!("unknown symmetry byte {other}"))),
    };
    let n = cur.u64("total pair count")?;
    let num_items = cur.u32("catalog size")? as usize;
    let mut item_counts = Vec::with_capacity(num_items);
    for _ in 0..num_items {
        item_counts.push(cur.u64("item marginal")?);
    }
    let num_pairs = cur.u64("stored pair count")?;
    let mut pair_counts = BTreeMap::new();
    let mut total = 0u64;
    for _ in 0..num_pairs {
        let i = cur.u32("pair row")?;
        let j = cur.u32("pair column")?;
        let count = cur.u64("pair count")?;
        if i as usize >= num_items || j as usize >= num_items {
            return Err(corrupt(
                "table",
                format!("pair ({i}, {j}) outside catalog of {num_items}"),
            ));
        }
        if i == j {
            return Err(corrupt("table", format!("diagonal pair ({i}, {j})")));
        }
        if symmetric && i > j {
            return Err(corrupt(
                "table",
                format!("unnormalized symmetric key ({i}, {j})"),
            ));
        }
        if count == 0 {
            return Err(corrupt("table", format!("zero count stored for ({i}, {j})")));
        }
        if pair_counts.insert((i, j), count).is_some() {
            return Err(corrupt("table", format!("duplicate pair ({i}, {j})")));
        }
        total = total
            .checked_add(count)
            .ok_or_else(|| corrupt("table", "pair counts overflow u64"))?;
    }
    if cur.remaining() != 0 {
        return Err(corrupt(
            "table",
            format!("{} trailing bytes after pair records", cur.remaining()),
        ));
    }
    if total != n {
        return Err(corrupt(
            "table",
            format!("stored n = {n} but pair counts sum to {total}"),
        ));
    }
    let marginal_total: u64 = item_counts.iter().sum();
    let expected = match convention {
        RoleConvention::CenterOnly => n,
        RoleConvention::BothRoles => 2 * n,
    };
    if marginal_total != expected {
        return Err(corrupt(
            "table",
            format!("marginals sum to {marginal_total}, expected {expected}"),
        ));
    }
    Ok(CooccurrenceTable::from_raw(
        n,
        item_counts,
        pair_counts,
        symmetric,
        convention,
    ))
}

pub fn write_table(path: &Path, table: &CooccurrenceTable) -> Result<(), IoError> {
    fs::write(path, encode_table(table))?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<CooccurrenceTable, IoError> {
    decode_table(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

/// Encodes an embedding matrix; values are narrowed to `f32`.
pub fn encode_embedding(embedding: &Embedding) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + embedding.data().len() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(embedding.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(embedding.dim() as u32).to_le_bytes());
    for &v in embedding.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_embedding(bytes: &[u8]) -> Result<Embedding, IoError> {
    let mut cur = Cursor::new(bytes);
    cur.magic(EMBEDDING_MAGIC, "embedding")?;
    let rows = cur.u32("row count")? as usize;
    let dim = cur.u32("dimension")? as usize;
    let expected = rows
        .checked_mul(dim)
        .ok_or_else(|| corrupt("embedding", "row count times dimension overflows"))?;
    if cur.remaining() != expected * 4 {
        return Err(IoError::Truncated("embedding values"));
    }
    let mut data = Vec::with_capacity(expected);
    for _ in 0..expected {
        let v = cur.f32("embedding value")?;
        if !v.is_finite() {
            return Err(corrupt("embedding", format!("non-finite value {v}")));
        }
        data.push(v as f64);
    }
    Ok(Embedding::from_data(rows, dim, data))
}

pub fn write_embedding(path: &Path, embedding: &Embedding) -> Result<(), IoError> {
    fs::write(path, encode_embedding(embedding))?;
    Ok(())
}

pub fn read_embedding(path: &Path) -> Result<Embedding, IoError> {
    decode_embedding(&fs::read(path)?)
}

/// Writes `item_id<TAB>f1 …<TAB>fd` rows; item ids are row indices unless a
/// vocabulary supplies names. Float formatting round-trips `f64` exactly.
pub fn write_embedding_tsv(
    path: &Path,
    embedding: &Embedding,
    vocabulary: Option<&Vocabulary>,
) -> Result<(), IoError> {
    let mut out = fs::File::create(path)?;
    let mut line = String::new();
    for i in 0..embedding.rows() as u32 {
        line.clear();
        match vocabulary {
            Some(v) => line.push_str(v.name(i)),
            None => line.push_str(&i.to_string()),
        }
        for &v in embedding.row(i) {
            line.push('\t');
            line.push_str(&v.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Reads the TSV layout written by [`write_embedding_tsv`] back into an
/// embedding matrix, ignoring item names (rows stay in file order).
pub fn read_embedding_tsv(path: &Path) -> Result<Embedding, IoError> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let _item = fields.next();
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| corrupt("embedding tsv", format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_, _>>()?;
        if values.is_empty() {
            return Err(corrupt(
                "embedding tsv",
                format!("line {} has no values", lineno + 1),
            ));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(corrupt(
                    "embedding tsv",
                    format!("line {} has {} values, expected {d}", lineno + 1, values.len()),
                ));
            }
            _ => {}
        }
        data.extend_from_slice(&values);
        rows += 1;
    }
    let dim = dim.ok_or_else(|| corrupt("embedding tsv", "file holds no rows"))?;
    Ok(Embedding::from_data(rows, dim, data))
}

// ---------------------------------------------------------------------------
// CSV exports and label files
// ---------------------------------------------------------------------------

/// Exports stored pairs as `i,j,count,relatedness` for inspection. The
/// estimate must come from the same table (matching catalog size).
pub fn export_table_csv(
    path: &Path,
    table: &CooccurrenceTable,
    estimate: &RelatednessEstimate,
) -> Result<(), IoError> {
    if estimate.num_items() != table.num_items() {
        return Err(corrupt(
            "table csv",
            format!(
                "estimate covers {} items, table covers {}",
                estimate.num_items(),
                table.num_items()
            ),
        ));
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["i", "j", "count", "relatedness"])?;
    for ((i, j), count) in table.pairs() {
        writer.write_record([
            i.to_string(),
            j.to_string(),
            count.to_string(),
            estimate.value(i, j).unwrap_or(f64::NAN).to_string(),
        ])?;
    }
    writer.flush().map_err(IoError::from)?;
    Ok(())
}

/// Reads `item_id,label` CSV into a dense per-item label vector; every item
/// in `0..num_items` must be labeled exactly once.
pub fn read_labels_csv(path: &Path, num_items: usize) -> Result<Vec<u32>, IoError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut labels: Vec<Option<u32>> = vec![None; num_items];
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(corrupt(
                "label csv",
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        let item: u32 = record[0]
            .trim()
            .parse()
            .map_err(|e| corrupt("label csv", format!("item id {:?}: {e}", &record[0])))?;
        let label: u32 = record[1]
            .trim()
            .parse()
            .map_err(|e| corrupt("label csv", format!("label {:?}: {e}", &record[1])))?;
        if item as usize >= num_items {
            return Err(corrupt(
                "label csv",
                format!("item {item} outside catalog of {num_items}"),
            ));
        }
        if labels[item as usize].replace(label).is_some() {
            return Err(corrupt("label csv", format!("duplicate label for item {item}")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or(IoError::MissingLabel(i as u32)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccur::relatedness;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_table(symmetric: bool, convention: RoleConvention) -> CooccurrenceTable {
        let stream = PairStream::new(
            vec![(0, 1), (1, 0), (2, 3), (3, 4), (0, 1), (4, 0)],
            Provenance::External,
            0,
        );
        CooccurrenceTable::accumulate(&stream, 5, convention, symmetric).unwrap()
    }

    #[test]
    fn pair_stream_round_trips() {
        let stream = PairStream::new(vec![(0, 1), (7, 2), (100_000, 3)], Provenance::External, 0);
        let decoded = decode_pair_stream(&encode_pair_stream(&stream)).unwrap();
        assert_eq!(decoded.pairs(), stream.pairs());
        assert_eq!(decoded.provenance(), Provenance::External);
        let empty = PairStream::new(vec![], Provenance::External, 0);
        assert!(decode_pair_stream(&encode_pair_stream(&empty))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn pair_stream_rejects_damage() {
        let stream = PairStream::new(vec![(0, 1)], Provenance::External, 0);
        let mut bytes = encode_pair_stream(&stream);
        // Wrong magic.
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_pair_stream(&bad),
            Err(IoError::BadMagic { .. })
        ));
        // Future version.
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_pair_stream(&bad),
            Err(IoError::UnsupportedVersion { version: 9, .. })
        ));
        // Torn record.
        bytes.pop();
        assert!(matches!(
            decode_pair_stream(&bytes),
            Err(IoError::Truncated(_))
        ));
        // Self-pair.
        let self_pair = [&b"RLNA"[..], &1u16.to_le_bytes(), &[2, 0, 0, 0, 2, 0, 0, 0]].concat();
        assert!(matches!(
            decode_pair_stream(&self_pair),
            Err(IoError::Corrupt { .. })
        ));
    }

    #[test]
    fn table_round_trips_across_conventions() {
        for symmetric in [false, true] {
            for convention in [RoleConvention::CenterOnly, RoleConvention::BothRoles] {
                let table = sample_table(symmetric, convention);
                let decoded = decode_table(&encode_table(&table)).unwrap();
                assert_eq!(decoded, table);
            }
        }
    }

    #[test]
    fn table_rejects_damage() {
        let bytes = encode_table(&sample_table(false, RoleConvention::CenterOnly));
        let mut bad = bytes.clone();
        bad[2] = b'X';
        assert!(matches!(decode_table(&bad), Err(IoError::BadMagic { .. })));
        // Inflate n without touching pair counts.
        let mut bad = bytes.clone();
        bad[8] ^= 0xFF;
        assert!(matches!(decode_table(&bad), Err(IoError::Corrupt { .. })));
        // Drop the tail.
        let torn = &bytes[..bytes.len() - 3];
        assert!(matches!(decode_table(torn), Err(IoError::Truncated(_))));
    }

    #[test]
    fn table_file_round_trips_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rlnc");
        let table = sample_table(true, RoleConvention::BothRoles);
        write_table(&path, &table).unwrap();
        assert_eq!(read_table(&path).unwrap(), table);
    }

    #[test]
    fn embedding_round_trips_with_f32_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = Embedding::from_data(
            7,
            5,
            (0..35).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(),
        );
        let decoded = decode_embedding(&encode_embedding(&emb)).unwrap();
        assert_eq!(decoded.rows(), 7);
        assert_eq!(decoded.dim(), 5);
        for (a, b) in decoded.data().iter().zip(emb.data()) {
            assert_eq!(*a, *b as f32 as f64, "f32 narrowing must be the only loss");
        }
        // Exactly representable values survive untouched.
        let exact = Embedding::from_data(2, 2, vec![0.5, -1.25, 3.0, 0.0]);
        assert_eq!(
            decode_embedding(&encode_embedding(&exact)).unwrap().data(),
            exact.data()
        );
    }

    #[test]
    fn embedding_rejects_damage() {
        let emb = Embedding::from_data(2, 2, vec![0.5, -1.25, 3.0, 0.0]);
        let bytes = encode_embedding(&emb);
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(
            decode_embedding(&bad),
            Err(IoError::BadMagic { .. })
        ));
        assert!(matches!(
            decode_embedding(&bytes[..bytes.len() - 1]),
            Err(IoError::Truncated(_))
        ));
        let mut nan = bytes.clone();
        let nan_bits = f32::NAN.to_le_bytes();
        nan[12..16].copy_from_slice(&nan_bits);
        assert!(matches!(decode_embedding(&nan), Err(IoError::Corrupt { .. })));
    }

    #[test]
    fn embedding_tsv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.tsv");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let emb = Embedding::from_data(
            4,
            3,
            (0..12).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        );
        write_embedding_tsv(&path, &emb, None).unwrap();
        let back = read_embedding_tsv(&path).unwrap();
        assert_eq!(back, emb, "f64 display formatting round-trips exactly");

        let mut vocab = Vocabulary::new();
        for name in ["apple", "bread", "cheese", "dates"] {
            vocab.intern(name);
        }
        write_embedding_tsv(&path, &emb, Some(&vocab)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("apple\t"));
        assert_eq!(read_embedding_tsv(&path).unwrap(), emb);
    }

    #[test]
    fn table_csv_export_lists_pairs_with_relatedness() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let table = sample_table(false, RoleConvention::CenterOnly);
        let est = relatedness(&table, 0.0, false).unwrap();
        export_table_csv(&path, &table, &est).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("i,j,count,relatedness"));
        let first = lines.next().unwrap();
        let fields: Vec<&str> = first.split(',').collect();
        assert_eq!(fields[0], "0");
        assert_eq!(fields[1], "1");
        assert_eq!(fields[2], "2");
        let logged: f64 = fields[3].parse().unwrap();
        assert!((logged - est.value(0, 1).unwrap()).abs() < 1e-12);
        assert_eq!(text.lines().count(), 1 + table.num_stored_pairs());
    }

    #[test]
    fn label_csv_requires_dense_unique_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        fs::write(&path, "item_id,label\n0,2\n1,0\n2,2\n").unwrap();
        assert_eq!(read_labels_csv(&path, 3).unwrap(), vec![2, 0, 2]);
        assert!(matches!(
            read_labels_csv(&path, 4),
            Err(IoError::MissingLabel(3))
        ));
        fs::write(&path, "item_id,label\n0,2\n0,1\n").unwrap();
        assert!(matches!(
            read_labels_csv(&path, 1),
            Err(IoError::Corrupt { .. })
        ));
        fs::write(&path, "item_id,label\n9,1\n").unwrap();
        assert!(matches!(
            read_labels_csv(&path, 3),
            Err(IoError::Corrupt { .. })
        ));
    }
}
