//! Pool files. JSON: an array of pair objects with typings as
//! `locus -> [slot, slot]`. CSV: one row per pair with typings in
//! `A*01:01/A*02:01 B07/B08` shorthand and DSAs space separated.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compatibility::{DsaEntry, Pair, PairId};
use crate::error::{Error, Result};
use crate::hla::HlaTyping;

#[derive(Debug, Deserialize, Serialize)]
struct PairRow {
    id: u32,
    ethnicity: String,
    recipient_blood: String,
    donor_blood: String,
    recipient_typing: String,
    donor_typing: String,
    dsa: String,
    arrival: f64,
    departure: f64,
}

fn check(pairs: &[Pair]) -> Result<()> {
    let mut seen = HashSet::new();
    for p in pairs {
        p.validate()?;
        if !seen.insert(p.id) {
            return Err(Error::InvariantViolation { pair: p.id, reason: "duplicate pair id".into() });
        }
    }
    Ok(())
}

pub fn pool_from_json(reader: impl Read, path: &Path) -> Result<Vec<Pair>> {
    let pairs: Vec<Pair> = serde_json::from_reader(reader).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    check(&pairs)?;
    Ok(pairs)
}

pub fn pool_from_csv(reader: impl Read, path: &Path) -> Result<Vec<Pair>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut pairs = Vec::new();
    for (i, row) in rdr.deserialize::<PairRow>().enumerate() {
        let line = i + 2;
        let bad = |reason: String| Error::Parse { path: path.to_path_buf(), line, reason };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let dsa = row
            .dsa
            .split_whitespace()
            .map(|t| t.parse::<DsaEntry>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| bad(e.to_string()))?;
        pairs.push(Pair {
            id: PairId(row.id),
            recipient_typing: HlaTyping::parse(&row.recipient_typing).map_err(|e| bad(e.to_string()))?,
            donor_typing: HlaTyping::parse(&row.donor_typing).map_err(|e| bad(e.to_string()))?,
            recipient_blood: row.recipient_blood.parse().map_err(|e: Error| bad(e.to_string()))?,
            donor_blood: row.donor_blood.parse().map_err(|e: Error| bad(e.to_string()))?,
            ethnicity: row.ethnicity,
            dsa,
            arrival: row.arrival,
            departure: row.departure,
        });
    }
    check(&pairs)?;
    Ok(pairs)
}

/// Loads and validates a pool; `.csv` files are read as CSV, anything else
/// as JSON.
pub fn load_pool(path: impl AsRef<Path>) -> Result<Vec<Pair>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    if is_csv(path) {
        pool_from_csv(reader, path)
    } else {
        pool_from_json(reader, path)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn write_pool_json(pairs: &[Pair], writer: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(writer, pairs)?;
    Ok(())
}

pub fn write_pool_csv(pairs: &[Pair], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in pairs {
        w.serialize(PairRow {
            id: p.id.0,
            ethnicity: p.ethnicity.clone(),
            recipient_blood: p.recipient_blood.to_string(),
            donor_blood: p.donor_blood.to_string(),
            recipient_typing: p.recipient_typing.to_string(),
            donor_typing: p.donor_typing.to_string(),
            dsa: p.dsa.iter().map(|d| d.0.to_string()).collect::<Vec<_>>().join(" "),
            arrival: p.arrival,
            departure: p.departure,
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes a pool in the format implied by the extension.
pub fn save_pool(pairs: &[Pair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    if is_csv(path) {
        write_pool_csv(pairs, &mut w)?;
    } else {
        write_pool_json(pairs, &mut w)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "id,ethnicity,recipient_blood,donor_blood,recipient_typing,donor_typing,dsa,arrival,departure\n";

    #[test]
    fn empty_csv_is_empty_pool() {
        assert!(pool_from_csv(HEADER.as_bytes(), Path::new("p.csv")).unwrap().is_empty());
    }

    #[test]
    fn arrival_after_departure_is_rejected() {
        let text = format!("{HEADER}4,x,O,A,A*01:01/A*02:01,A*03:01/A*03:01,B07,10.0,5.0\n");
        match pool_from_csv(text.as_bytes(), Path::new("p.csv")) {
            Err(Error::InvariantViolation { pair, .. }) => assert_eq!(pair, PairId(4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let text =
            format!("{HEADER}1,x,O,A,A*01:01/A*02:01,A*03:01/A*03:01,,1.0,5.0\n2,x,Q,A,A01/A02,A03/A03,,1.0,5.0\n");
        match pool_from_csv(text.as_bytes(), Path::new("p.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
