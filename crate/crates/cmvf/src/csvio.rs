//! Practice logs as CSV: `student_id,question_id,concept_ids,response,order_index`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use cmvf_core::data::{Dataset, RawEvent};

use crate::error::CliError;

pub const HEADER: [&str; 5] = ["student_id", "question_id", "concept_ids", "response", "order_index"];
pub const CONCEPT_SEPARATOR: char = ';';

pub fn read_events<R: Read>(reader: R) -> Result<Vec<RawEvent>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| CliError::Data(format!("cannot read header: {e}")))?;
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != HEADER {
        return Err(CliError::Data(format!("expected header `{}`, found `{}`", HEADER.join(","), found.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let concepts: Vec<String> = field(2)
            .split(CONCEPT_SEPARATOR)
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(String::from)
            .collect();
        if field(0).is_empty() || field(1).is_empty() {
            return Err(CliError::Data(format!("line {line}: empty student or question id")));
        }
        if concepts.is_empty() {
            return Err(CliError::Data(format!("line {line}: no concept ids")));
        }
        let correct = match field(3) {
            "1" => true,
            "0" => false,
            other => return Err(CliError::Data(format!("line {line}: response `{other}` is not 0 or 1"))),
        };
        let order_index = field(4)
            .parse()
            .map_err(|_| CliError::Data(format!("line {line}: order_index `{}` is not an integer", field(4))))?;
        out.push(RawEvent { student: field(0).into(), question: field(1).into(), concepts, correct, order_index });
    }
    Ok(out)
}

pub fn load_csv(path: &Path) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let events = read_events(file)?;
    Ok(Dataset::from_raw(events)?)
}

pub fn write_events<W: Write>(writer: W, events: &[RawEvent]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(HEADER).map_err(io)?;
    for e in events {
        let concepts = e.concepts.join(&CONCEPT_SEPARATOR.to_string());
        let response = if e.correct { "1" } else { "0" };
        let order = e.order_index.to_string();
        w.write_record([e.student.as_str(), e.question.as_str(), concepts.as_str(), response, order.as_str()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn write_csv(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    write_events(file, &data.to_raw())
}
