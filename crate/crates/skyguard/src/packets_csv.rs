//! Packet event log: `timestamp,src,dst,sport,dport,flags,seq,ack,length`.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use skyguard_core::packetset::{Packet, PacketEvent, TcpFlags};
use skyguard_core::Error as CoreError;

use crate::error::{Error, Result};

pub const HEADER: [&str; 9] = ["timestamp", "src", "dst", "sport", "dport", "flags", "seq", "ack", "length"];

fn err(line: u64, message: impl Into<String>) -> CoreError {
    CoreError::Parse {
        line: line as usize,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, line: u64) -> Result<T, CoreError> {
    row[i]
        .trim()
        .parse()
        .map_err(|_| err(line, format!("{}: cannot parse {:?}", HEADER[i], &row[i])))
}

pub fn parse_packet_log<R: Read>(input: R) -> Result<Vec<PacketEvent>, CoreError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows = reader.records();
    let head = match rows.next() {
        Some(r) => r.map_err(|e| err(1, e.to_string()))?,
        None => return Err(err(1, "empty file")),
    };
    if head.iter().map(str::trim).ne(HEADER) {
        return Err(err(1, format!("header must be `{}`", HEADER.join(","))));
    }
    let mut events = Vec::new();
    for row in rows {
        let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let timestamp: f64 = num(&row, 0, line)?;
        if !timestamp.is_finite() {
            return Err(err(line, "timestamp must be finite"));
        }
        events.push(PacketEvent {
            timestamp,
            src: row[1].trim().to_string(),
            dst: row[2].trim().to_string(),
            packet: Packet {
                sport: num(&row, 3, line)?,
                dport: num(&row, 4, line)?,
                flags: TcpFlags::parse(row[5].trim()).map_err(|m| err(line, m))?,
                seq: num(&row, 6, line)?,
                ack: num(&row, 7, line)?,
                length: num(&row, 8, line)?,
            },
        });
    }
    Ok(events)
}

pub fn render_packet_log(events: &[PacketEvent]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for e in events {
        let p = &e.packet;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.timestamp, e.src, e.dst, p.sport, p.dport, p.flags, p.seq, p.ack, p.length
        );
    }
    out
}

pub fn read_packet_log(path: &Path) -> Result<Vec<PacketEvent>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_packet_log(std::io::BufReader::new(file)).map_err(Error::in_file(path))
}
