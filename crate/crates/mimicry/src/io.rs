//! Readers and writers for every on-disk format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mimicry_core::context::ContextStats;
use mimicry_core::dyads::{AdditionFrequency, Dyad};
use mimicry_core::matching::MatchedPair;
use mimicry_core::model::{
    format_timestamp, Demographics, Gender, ItemCatalog, ItemCategory, LogBuilder, PersonRecord, RawRecord, Status,
    TransactionLog,
};
use mimicry_core::FocusItem;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxFormat {
    Csv,
    JsonLines,
}

impl TxFormat {
    /// `.jsonl` / `.ndjson` are JSON lines, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => TxFormat::JsonLines,
            _ => TxFormat::Csv,
        }
    }
}

pub const TX_HEADER: [&str; 6] = ["tx_id", "person_id", "timestamp", "shop_id", "register_id", "items"];

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?))
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(r)
}

/// Maps header names to column positions, failing on a missing column.
fn columns<const N: usize>(headers: &csv::StringRecord, names: [&str; N], what: &str) -> Result<[usize; N]> {
    let mut out = [0; N];
    for (slot, name) in out.iter_mut().zip(names) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{what}: missing column {name:?}"))?;
    }
    Ok(out)
}

fn field(rec: &csv::StringRecord, i: usize) -> String {
    rec.get(i).unwrap_or("").to_string()
}

fn split_items(s: &str) -> Vec<String> {
    s.split(';').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}

/// Streams transaction records into a validated log.
pub fn read_transactions_from<R: Read>(reader: R, format: TxFormat, catalog: &ItemCatalog) -> Result<TransactionLog> {
    let mut builder = LogBuilder::new(catalog);
    match format {
        TxFormat::Csv => {
            let mut rdr = csv_reader(reader);
            let headers = rdr.headers().context("model: unreadable header")?.clone();
            let [tx, person, ts, shop, reg, items] = columns(&headers, TX_HEADER, "model")?;
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec.context("model: unreadable record")?;
                let line = rec.position().map_or(i + 2, |p| p.line() as usize);
                builder
                    .push(RawRecord {
                        line,
                        tx_id: field(&rec, tx),
                        person_id: field(&rec, person),
                        timestamp: field(&rec, ts),
                        shop_id: field(&rec, shop),
                        register_id: field(&rec, reg),
                        items: split_items(&field(&rec, items)),
                    })
                    .context("model")?;
            }
        }
        TxFormat::JsonLines => {
            #[derive(Deserialize)]
            struct Line {
                #[serde(default)]
                tx_id: String,
                #[serde(default)]
                person_id: String,
                #[serde(default)]
                timestamp: String,
                #[serde(default)]
                shop_id: String,
                #[serde(default)]
                register_id: String,
                #[serde(default)]
                items: Vec<String>,
            }
            for (i, line) in BufReader::new(reader).lines().enumerate() {
                let line = line.context("model: unreadable line")?;
                if line.trim().is_empty() {
                    continue;
                }
                let l: Line = serde_json::from_str(&line).with_context(|| format!("model: line {}: invalid JSON", i + 1))?;
                builder
                    .push(RawRecord {
                        line: i + 1,
                        tx_id: l.tx_id,
                        person_id: l.person_id,
                        timestamp: l.timestamp,
                        shop_id: l.shop_id,
                        register_id: l.register_id,
                        items: l.items,
                    })
                    .context("model")?;
            }
        }
    }
    Ok(builder.finish())
}

pub fn read_transactions(path: &Path, catalog: &ItemCatalog) -> Result<TransactionLog> {
    read_transactions_from(open(path)?, TxFormat::from_path(path), catalog)
        .with_context(|| format!("reading {}", path.display()))
}

/// Canonical CSV form: timestamp order, `T` separator, items joined by `;`.
pub fn write_transactions_to<W: Write>(log: &TransactionLog, w: W) -> Result<()> {
    write_records_to(log.to_records(), w)
}

pub fn write_records_to<W: Write>(records: impl IntoIterator<Item = RawRecord>, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wtr.write_record(TX_HEADER)?;
    for r in records {
        let items = r.items.join(";");
        wtr.write_record([&r.tx_id, &r.person_id, &r.timestamp, &r.shop_id, &r.register_id, &items])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_transactions(log: &TransactionLog, path: &Path) -> Result<()> {
    write_transactions_to(log, create(path)?)
}

pub fn write_records(records: impl IntoIterator<Item = RawRecord>, path: &Path) -> Result<()> {
    write_records_to(records, create(path)?)
}

pub fn write_transactions_jsonl(log: &TransactionLog, path: &Path) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        tx_id: &'a str,
        person_id: &'a str,
        timestamp: String,
        shop_id: &'a str,
        register_id: &'a str,
        items: &'a [String],
    }
    let mut w = create(path)?;
    for t in log.transactions() {
        let line = Line {
            tx_id: &t.tx_id,
            person_id: log.person_name(t.person),
            timestamp: format_timestamp(&t.timestamp),
            shop_id: log.shop_name(t.shop),
            register_id: log.register_name(t.register),
            items: &t.basket,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_catalog_from<R: Read>(reader: R) -> Result<ItemCatalog> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().context("catalog: unreadable header")?.clone();
    let [code, cat, sub] = columns(&headers, ["item_code", "category", "subtype"], "catalog")?;
    let mut catalog = ItemCatalog::new();
    for rec in rdr.records() {
        let rec = rec.context("catalog: unreadable record")?;
        let line = rec.position().map_or(0, |p| p.line());
        let category = ItemCategory::parse(&field(&rec, cat), &field(&rec, sub))
            .with_context(|| format!("catalog: line {line}"))?;
        catalog.insert(field(&rec, code), category).with_context(|| format!("catalog: line {line}"))?;
    }
    Ok(catalog)
}

pub fn read_catalog(path: &Path) -> Result<ItemCatalog> {
    read_catalog_from(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn write_catalog(catalog: &ItemCatalog, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["item_code", "category", "subtype"])?;
    for (code, category) in catalog.iter() {
        let (c, s) = category.columns();
        w.write_record([code, c, s])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_demographics_from<R: Read>(reader: R) -> Result<Demographics> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().context("demographics: unreadable header")?.clone();
    let [id, gender, status, birth] =
        columns(&headers, ["person_id", "gender", "status", "birth_year"], "demographics")?;
    let mut out = Demographics::new();
    for rec in rdr.records() {
        let rec = rec.context("demographics: unreadable record")?;
        let line = rec.position().map_or(0, |p| p.line());
        let ctx = || format!("demographics: line {line}");
        let by = field(&rec, birth);
        out.insert(PersonRecord {
            person_id: field(&rec, id),
            gender: Gender::parse(&field(&rec, gender)).with_context(ctx)?,
            status: Status::parse(&field(&rec, status)).with_context(ctx)?,
            birth_year: if by.is_empty() { None } else { Some(by.parse().with_context(ctx)?) },
        });
    }
    Ok(out)
}

pub fn read_demographics(path: &Path) -> Result<Demographics> {
    read_demographics_from(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn write_demographics(demo: &Demographics, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["person_id", "gender", "status", "birth_year"])?;
    for r in demo.iter() {
        let by = r.birth_year.map(|b| b.to_string()).unwrap_or_default();
        w.write_record([
            r.person_id.as_str(),
            r.gender.map_or("", Gender::name),
            r.status.map_or("", Status::name),
            by.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_context(log: &TransactionLog, context: &ContextStats, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["shop_id", "date", "daypart", "category", "popularity", "available", "n"])?;
    for row in context.rows() {
        w.write_record([
            log.shop_name(row.cell.shop).to_string(),
            row.cell.date.to_string(),
            row.cell.daypart.name().to_string(),
            row.item.name().to_string(),
            row.popularity.to_string(),
            row.available.to_string(),
            row.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const DYAD_HEADER: [&str; 7] = ["partner_tx", "focal_tx", "shop_id", "register_id", "date", "daypart", "delay_s"];

pub fn write_dyads(log: &TransactionLog, dyads: &[Dyad], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(DYAD_HEADER)?;
    for d in dyads {
        w.write_record([
            log.tx(d.partner_tx).tx_id.clone(),
            log.tx(d.focal_tx).tx_id.clone(),
            log.shop_name(d.shop).to_string(),
            log.register_name(d.register).to_string(),
            d.date.to_string(),
            d.daypart.name().to_string(),
            d.delay_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn lookup(log: &TransactionLog, tx_id: &str, what: &str) -> Result<usize> {
    log.find(tx_id).ok_or_else(|| anyhow!("{what}: transaction {tx_id:?} is not in the log"))
}

/// Reloads a dyad dump against the log it was built from.
pub fn read_dyads(log: &TransactionLog, path: &Path) -> Result<Vec<Dyad>> {
    let mut rdr = csv_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let [p, f] = columns(&headers, ["partner_tx", "focal_tx"], "dyads")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        out.push(Dyad::between(log, lookup(log, &field(&rec, p), "dyads")?, lookup(log, &field(&rec, f), "dyads")?));
    }
    Ok(out)
}

pub fn write_additions(rows: &[AdditionFrequency], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["daypart", "addition", "n_dyads", "n_treated", "fraction", "selected"])?;
    for r in rows {
        w.write_record([
            r.daypart.name().to_string(),
            r.addition.name().to_string(),
            r.n_dyads.to_string(),
            r.n_treated.to_string(),
            r.fraction.to_string(),
            r.selected.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const PAIR_HEADER: [&str; 7] = [
    "item",
    "treated_partner_tx",
    "treated_focal_tx",
    "control_partner_tx",
    "control_focal_tx",
    "popularity_t",
    "popularity_c",
];

pub fn write_matched_pairs<'a>(
    log: &TransactionLog,
    pairs: impl IntoIterator<Item = &'a MatchedPair>,
    path: &Path,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(PAIR_HEADER)?;
    for p in pairs {
        w.write_record([
            p.item.name().to_string(),
            log.tx(p.treated.partner_tx).tx_id.clone(),
            log.tx(p.treated.focal_tx).tx_id.clone(),
            log.tx(p.control.partner_tx).tx_id.clone(),
            log.tx(p.control.focal_tx).tx_id.clone(),
            p.popularity_t.to_string(),
            p.popularity_c.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reloads a matched-pair dump. Popularities round-trip exactly.
pub fn read_matched_pairs(log: &TransactionLog, path: &Path) -> Result<Vec<MatchedPair>> {
    let mut rdr = csv_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let [item, tp, tf, cp, cf, pt, pc] = columns(&headers, PAIR_HEADER, "matching")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let tx = |i: usize| lookup(log, &field(&rec, i), "matching");
        let item: FocusItem = field(&rec, item).parse().map_err(|e| anyhow!("matching: {e}"))?;
        out.push(MatchedPair {
            item,
            treated: Dyad::between(log, tx(tp)?, tx(tf)?),
            control: Dyad::between(log, tx(cp)?, tx(cf)?),
            popularity_t: field(&rec, pt).parse().context("matching: popularity_t")?,
            popularity_c: field(&rec, pc).parse().context("matching: popularity_c")?,
        });
    }
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(text: &str, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Writes rows whose cells are already formatted.
pub fn write_table(header: &[&str], rows: &[Vec<String>], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            bail!("table {}: row has {} cells, header {}", path.display(), r.len(), header.len());
        }
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> ItemCatalog {
        read_catalog_from("item_code,category,subtype\nM,anchor_meal,\nV,anchor_meal,vegetarian\nC17,anchor_beverage,coffee\nF,addition,fruit\n".as_bytes()).unwrap()
    }

    const FIXTURE: &str = "tx_id,person_id,timestamp,shop_id,register_id,items
t2,b,2020-01-06T12:00:40,s1,r1,M;F
t1,a,2020-01-06T12:00:00,s1,r1,M;XX
t3,c,2020-01-06 08:00:00,s1,r2,C17
";

    #[test]
    fn csv_fixture_with_unknown_item() {
        let log = read_transactions_from(FIXTURE.as_bytes(), TxFormat::Csv, &catalog()).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.warnings().count(), 1);
        assert_eq!(log.tx(0).tx_id, "t3");
    }

    #[test]
    fn empty_stream() {
        let log = read_transactions_from("tx_id,person_id,timestamp,shop_id,register_id,items\n".as_bytes(), TxFormat::Csv, &catalog()).unwrap();
        assert!(log.is_empty());
        assert_eq!(log.warnings().count(), 0);
    }

    #[test]
    fn bad_records_carry_line_numbers() {
        let text = "tx_id,person_id,timestamp,shop_id,register_id,items\nt1,a,2018-13-01T09:00:00,s,r,M\nt2,a,2018-12-01T09:00:00,s,r,\n";
        let log = read_transactions_from(text.as_bytes(), TxFormat::Csv, &catalog()).unwrap();
        assert!(log.is_empty());
        let lines: Vec<usize> = log.rejected().iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3]);
        let dup = "tx_id,person_id,timestamp,shop_id,register_id,items\nt1,a,2018-12-01T09:00:00,s,r,M\nt1,b,2018-12-01T09:00:05,s,r,M\n";
        let err = read_transactions_from(dup.as_bytes(), TxFormat::Csv, &catalog()).unwrap_err();
        assert!(format!("{err:#}").contains("t1"), "{err:#}");
    }

    #[test]
    fn canonical_round_trip() {
        let cat = catalog();
        let log = read_transactions_from(FIXTURE.as_bytes(), TxFormat::Csv, &cat).unwrap();
        let mut first = Vec::new();
        write_transactions_to(&log, &mut first).unwrap();
        let again = read_transactions_from(first.as_slice(), TxFormat::Csv, &cat).unwrap();
        assert_eq!(again, log);
        let mut second = Vec::new();
        write_transactions_to(&again, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn json_lines_match_csv() {
        let cat = catalog();
        let csv_log = read_transactions_from(FIXTURE.as_bytes(), TxFormat::Csv, &cat).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tx.jsonl");
        write_transactions_jsonl(&csv_log, &path).unwrap();
        assert_eq!(read_transactions(&path, &cat).unwrap(), csv_log);
    }

    #[test]
    fn catalog_and_demographics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cat = catalog();
        let p = dir.path().join("catalog.csv");
        write_catalog(&cat, &p).unwrap();
        assert_eq!(read_catalog(&p).unwrap(), cat);

        let demo = read_demographics_from("person_id,gender,status,birth_year\na,female,student,1999\nb,,,\nc,m,staff,\n".as_bytes()).unwrap();
        assert_eq!(demo.len(), 3);
        assert_eq!(demo.get("b").unwrap().status, None);
        let p = dir.path().join("demo.csv");
        write_demographics(&demo, &p).unwrap();
        assert_eq!(read_demographics(&p).unwrap(), demo);
        assert!(read_demographics_from("person_id,gender,status,birth_year\na,x,,\n".as_bytes()).is_err());
    }
}
