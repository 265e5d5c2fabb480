//! Preference-pair datasets over packet sessions.
//!
//! Packets are reduced to six key fields (`sport`, `dport`, `flags`, `seq`,
//! `ack`, `length`). Sessions are cut into `(context, prompt, next)`
//! triples, and each triple becomes a chosen/rejected pair where the
//! rejected packet differs from the true next packet in exactly one field.
//!
//! # Text format
//!
//! One document per packet variant, sections in this order:
//!
//! ```text
//! #Context
//! #BLOCK
//! sport:14550
//! dport:5760
//! flags:PA
//! seq:1000
//! ack:2000
//! length:52
//! #Previous_Packet
//! #BLOCK
//! ...
//! #Predicted_Packet
//! #BLOCK
//! ...
//! ```
//!
//! `#Context` holds one `#BLOCK` per context packet (possibly none). A sample
//! renders as the chosen document, a blank line, then the rejected document.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dimension, Error, Result};

/// TCP flag letters in canonical order.
pub const FLAG_ALPHABET: &str = "FSRPAUEC";

/// Set of TCP flags, rendered in [`FLAG_ALPHABET`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: u8 = 0;
    pub const RST: u8 = 2;

    /// Parses a string of unique flag letters.
    pub fn parse(s: &str) -> core::result::Result<Self, String> {
        let mut bits = 0u8;
        for ch in s.chars() {
            let Some(i) = FLAG_ALPHABET.find(ch) else {
                return Err(format!("unknown TCP flag {ch:?}"));
            };
            if bits & (1 << i) != 0 {
                return Err(format!("TCP flag {ch:?} repeated"));
            }
            bits |= 1 << i;
        }
        Ok(Self(bits))
    }

    pub fn contains(self, index: u8) -> bool {
        self.0 & (1 << index) != 0
    }

    pub fn toggled(self, index: u8) -> Self {
        Self(self.0 ^ (1 << index))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn closes_session(self) -> bool {
        self.contains(Self::FIN) || self.contains(Self::RST)
    }
}

impl fmt::Display for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ch) in FLAG_ALPHABET.chars().enumerate() {
            if self.contains(i as u8) {
                f.write_char(ch)?;
            }
        }
        Ok(())
    }
}

/// One of the six predicted packet fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Field {
    Sport,
    Dport,
    Flags,
    Seq,
    Ack,
    Length,
}

impl Field {
    /// Rendering and report order.
    pub const ALL: [Field; 6] = [
        Field::Sport,
        Field::Dport,
        Field::Flags,
        Field::Seq,
        Field::Ack,
        Field::Length,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Sport => "sport",
            Field::Dport => "dport",
            Field::Flags => "flags",
            Field::Seq => "seq",
            Field::Ack => "ack",
            Field::Length => "length",
        }
    }

    pub fn from_name(s: &str) -> Option<Field> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The six key fields of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Packet {
    pub sport: u16,
    pub dport: u16,
    pub flags: TcpFlags,
    pub seq: u32,
    pub ack: u32,
    pub length: u32,
}

impl Packet {
    pub fn field_eq(&self, other: &Packet, field: Field) -> bool {
        match field {
            Field::Sport => self.sport == other.sport,
            Field::Dport => self.dport == other.dport,
            Field::Flags => self.flags == other.flags,
            Field::Seq => self.seq == other.seq,
            Field::Ack => self.ack == other.ack,
            Field::Length => self.length == other.length,
        }
    }

    /// Fields whose values differ, in canonical order.
    pub fn diff(&self, other: &Packet) -> Vec<Field> {
        Field::ALL
            .into_iter()
            .filter(|&f| !self.field_eq(other, f))
            .collect()
    }

    fn value_string(&self, field: Field) -> String {
        match field {
            Field::Sport => self.sport.to_string(),
            Field::Dport => self.dport.to_string(),
            Field::Flags => self.flags.to_string(),
            Field::Seq => self.seq.to_string(),
            Field::Ack => self.ack.to_string(),
            Field::Length => self.length.to_string(),
        }
    }
}

/// A packet positioned within its session.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PacketRecord {
    pub packet: Packet,
    pub session_id: String,
    pub index_in_session: usize,
}

/// One row of a packet capture log.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PacketEvent {
    /// Seconds.
    pub timestamp: f64,
    pub src: String,
    pub dst: String,
    pub packet: Packet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub packets: Vec<PacketRecord>,
}

impl Session {
    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.packets.iter().map(|r| &r.packet)
    }
}

/// Idle gap that ends a session, in seconds.
pub const DEFAULT_IDLE_TIMEOUT: f64 = 60.0;

/// Groups packets into bidirectional sessions.
///
/// Events are processed in timestamp order (ties keep log order). A session
/// closes after a packet carrying FIN or RST, or when the next packet of the
/// same endpoint pair arrives more than `idle_timeout` seconds after the
/// previous one. Sessions are returned in order of their first packet.
pub fn extract_sessions(events: &[PacketEvent], idle_timeout: f64) -> Vec<Session> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].timestamp.total_cmp(&events[b].timestamp));

    let mut sessions: Vec<Session> = Vec::new();
    // endpoint pair -> (session index, last timestamp)
    let mut open: BTreeMap<(String, u16, String, u16), (usize, f64)> = BTreeMap::new();
    for i in order {
        let ev = &events[i];
        let a = (ev.src.clone(), ev.packet.sport);
        let b = (ev.dst.clone(), ev.packet.dport);
        let ((h1, p1), (h2, p2)) = if a <= b { (a, b) } else { (b, a) };
        let key = (h1, p1, h2, p2);
        let slot = match open.get(&key) {
            Some(&(idx, last)) if ev.timestamp - last <= idle_timeout => idx,
            _ => {
                sessions.push(Session {
                    id: format!("session-{}", sessions.len()),
                    packets: Vec::new(),
                });
                sessions.len() - 1
            }
        };
        let session = &mut sessions[slot];
        session.packets.push(PacketRecord {
            packet: ev.packet,
            session_id: session.id.clone(),
            index_in_session: session.packets.len(),
        });
        if ev.packet.flags.closes_session() {
            open.remove(&key);
        } else {
            open.insert(key, (slot, ev.timestamp));
        }
    }
    sessions
}

/// `context` packets, the prompt packet and the packet that followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub context: Vec<Packet>,
    pub prompt: Packet,
    pub next: Packet,
}

/// Slides over a session: every position with `n_context` predecessors
/// and a successor yields one triple.
pub fn build_windows(session: &[Packet], n_context: usize) -> Vec<Triple> {
    if session.len() < n_context + 2 {
        return Vec::new();
    }
    (n_context..session.len() - 1)
        .map(|i| Triple {
            context: session[i - n_context..i].to_vec(),
            prompt: session[i],
            next: session[i + 1],
        })
        .collect()
}

/// A chosen/rejected training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneSample {
    pub context: Vec<Packet>,
    pub prompt: Packet,
    pub chosen: Packet,
    pub rejected: Packet,
    pub perturbed_field: Field,
}

/// A concrete single-field edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Wrapping offset for ports, `seq` and `ack`.
    Offset(i64),
    /// Replacement length.
    Length(u32),
    /// Toggle the flag at this index of [`FLAG_ALPHABET`].
    ToggleFlag(u8),
}

/// Applies `perturbation` to `field` of `packet`.
pub fn perturb(packet: &Packet, field: Field, perturbation: Perturbation) -> Result<Packet> {
    let mut out = *packet;
    match (field, perturbation) {
        (Field::Sport, Perturbation::Offset(d)) => out.sport = wrap_u16(packet.sport, d),
        (Field::Dport, Perturbation::Offset(d)) => out.dport = wrap_u16(packet.dport, d),
        (Field::Seq, Perturbation::Offset(d)) => out.seq = wrap_u32(packet.seq, d),
        (Field::Ack, Perturbation::Offset(d)) => out.ack = wrap_u32(packet.ack, d),
        (Field::Length, Perturbation::Length(l)) => out.length = l,
        (Field::Flags, Perturbation::ToggleFlag(i)) if (i as usize) < FLAG_ALPHABET.len() => {
            out.flags = packet.flags.toggled(i)
        }
        (field, p) => {
            return Err(Error::Config(format!("{p:?} cannot be applied to {field}")));
        }
    }
    if out == *packet {
        return Err(Error::Config(format!("{perturbation:?} leaves {field} unchanged")));
    }
    Ok(out)
}

fn wrap_u16(v: u16, delta: i64) -> u16 {
    (v as i64 + delta).rem_euclid(1 << 16) as u16
}

fn wrap_u32(v: u32, delta: i64) -> u32 {
    (v as i64 + delta).rem_euclid(1 << 32) as u32
}

fn signed(rng: &mut ChaCha8Rng, max: i64) -> i64 {
    let magnitude = rng.random_range(1..=max);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Draws a random perturbation of `field` that changes `packet`.
pub fn random_perturbation(packet: &Packet, field: Field, rng: &mut ChaCha8Rng) -> Perturbation {
    match field {
        Field::Sport | Field::Dport => Perturbation::Offset(signed(rng, 1000)),
        Field::Seq | Field::Ack => Perturbation::Offset(signed(rng, 1_000_000)),
        Field::Length => loop {
            let l = rng.random_range(0..=1500);
            if l != packet.length {
                break Perturbation::Length(l);
            }
        },
        Field::Flags => Perturbation::ToggleFlag(rng.random_range(0..FLAG_ALPHABET.len() as u8)),
    }
}

/// Builds a pair with a uniformly chosen field and random perturbation.
pub fn make_pair(triple: &Triple, seed: u64) -> FinetuneSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = Field::ALL[rng.random_range(0..Field::ALL.len())];
    let perturbation = random_perturbation(&triple.next, field, &mut rng);
    // Every drawn perturbation changes the field.
    make_pair_with(triple, field, perturbation).expect("random perturbation is valid")
}

/// Builds a pair with an explicit edit.
pub fn make_pair_with(triple: &Triple, field: Field, perturbation: Perturbation) -> Result<FinetuneSample> {
    Ok(FinetuneSample {
        context: triple.context.clone(),
        prompt: triple.prompt,
        chosen: triple.next,
        rejected: perturb(&triple.next, field, perturbation)?,
        perturbed_field: field,
    })
}

const SECTION_CONTEXT: &str = "#Context";
const SECTION_PREVIOUS: &str = "#Previous_Packet";
const SECTION_PREDICTED: &str = "#Predicted_Packet";
const BLOCK: &str = "#BLOCK";

fn render_block(out: &mut String, p: &Packet) {
    out.push_str(BLOCK);
    out.push('\n');
    for f in Field::ALL {
        let _ = writeln!(out, "{}:{}", f.name(), p.value_string(f));
    }
}

fn render_document(out: &mut String, context: &[Packet], prompt: &Packet, predicted: &Packet) {
    out.push_str(SECTION_CONTEXT);
    out.push('\n');
    for p in context {
        render_block(out, p);
    }
    out.push_str(SECTION_PREVIOUS);
    out.push('\n');
    render_block(out, prompt);
    out.push_str(SECTION_PREDICTED);
    out.push('\n');
    render_block(out, predicted);
}

/// Renders the chosen document, a blank line, and the rejected document.
pub fn render_sample(sample: &FinetuneSample) -> String {
    let mut out = String::new();
    render_document(&mut out, &sample.context, &sample.prompt, &sample.chosen);
    out.push('\n');
    render_document(&mut out, &sample.context, &sample.prompt, &sample.rejected);
    out
}

/// Renders samples separated by blank lines.
pub fn render_samples(samples: &[FinetuneSample]) -> String {
    let mut out = String::new();
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&render_sample(s));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct Document {
    context: Vec<Packet>,
    prompt: Packet,
    predicted: Packet,
    first_line: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Default)]
struct BlockBuilder {
    values: [Option<String>; 6],
    start: usize,
}

impl BlockBuilder {
    fn set(&mut self, line: usize, text: &str) -> Result<()> {
        let (key, value) = text
            .split_once(':')
            .ok_or_else(|| parse_err(line, format!("expected key:value, got {text:?}")))?;
        let field = Field::from_name(key).ok_or_else(|| parse_err(line, format!("unknown key {key:?}")))?;
        let slot = &mut self.values[field as usize];
        if slot.is_some() {
            return Err(parse_err(line, format!("duplicate key {key:?}")));
        }
        *slot = Some(value.into());
        Ok(())
    }

    fn finish(self, end_line: usize) -> Result<Packet> {
        let get = |f: Field| {
            self.values[f as usize]
                .clone()
                .ok_or_else(|| parse_err(end_line, format!("block starting at line {} is missing {f}", self.start)))
        };
        let num = |f: Field, v: String| -> Result<u64> {
            v.parse::<u64>()
                .map_err(|_| parse_err(end_line, format!("{f} value {v:?} is not an unsigned integer")))
        };
        let sport = num(Field::Sport, get(Field::Sport)?)?;
        let dport = num(Field::Dport, get(Field::Dport)?)?;
        let flags = TcpFlags::parse(&get(Field::Flags)?).map_err(|m| parse_err(end_line, m))?;
        let seq = num(Field::Seq, get(Field::Seq)?)?;
        let ack = num(Field::Ack, get(Field::Ack)?)?;
        let length = num(Field::Length, get(Field::Length)?)?;
        let narrow = |f: Field, v: u64, max: u64| {
            if v > max {
                Err(parse_err(end_line, format!("{f} value {v} out of range")))
            } else {
                Ok(v)
            }
        };
        Ok(Packet {
            sport: narrow(Field::Sport, sport, u16::MAX as u64)? as u16,
            dport: narrow(Field::Dport, dport, u16::MAX as u64)? as u16,
            flags,
            seq: narrow(Field::Seq, seq, u32::MAX as u64)? as u32,
            ack: narrow(Field::Ack, ack, u32::MAX as u64)? as u32,
            length: narrow(Field::Length, length, u32::MAX as u64)? as u32,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Context,
    Previous,
    Predicted,
}

/// Parses a document made of `lines` (each tagged with its 1-based line
/// number).
fn parse_document(lines: &[(usize, &str)]) -> Result<Document> {
    let first_line = lines.first().map_or(0, |l| l.0);
    let mut section: Option<Section> = None;
    let mut blocks: [Vec<Packet>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut current: Option<BlockBuilder> = None;

    let close = |current: &mut Option<BlockBuilder>,
                 blocks: &mut [Vec<Packet>; 3],
                 section: Option<Section>,
                 line: usize|
     -> Result<()> {
        if let Some(b) = current.take() {
            let sec = section.expect("blocks only open inside a section");
            blocks[sec as usize].push(b.finish(line)?);
        }
        Ok(())
    };

    for &(no, text) in lines {
        let text = text.trim_end_matches('\r');
        if let Some(next) = match text {
            SECTION_CONTEXT => Some(Section::Context),
            SECTION_PREVIOUS => Some(Section::Previous),
            SECTION_PREDICTED => Some(Section::Predicted),
            _ => None,
        } {
            close(&mut current, &mut blocks, section, no)?;
            let expected = match section {
                None => Section::Context,
                Some(Section::Context) => Section::Previous,
                Some(Section::Previous) => Section::Predicted,
                Some(Section::Predicted) => {
                    return Err(parse_err(no, "section after #Predicted_Packet"));
                }
            };
            if next != expected {
                return Err(parse_err(no, format!("unexpected section {text}")));
            }
            section = Some(next);
        } else if text == BLOCK {
            if section.is_none() {
                return Err(parse_err(no, "#BLOCK outside a section"));
            }
            close(&mut current, &mut blocks, section, no)?;
            current = Some(BlockBuilder {
                start: no,
                ..BlockBuilder::default()
            });
        } else if text.starts_with('#') {
            return Err(parse_err(no, format!("unknown section {text}")));
        } else {
            match current.as_mut() {
                Some(b) => b.set(no, text)?,
                None => return Err(parse_err(no, format!("key:value line outside a #BLOCK: {text:?}"))),
            }
        }
    }
    let last = lines.last().map_or(0, |l| l.0);
    close(&mut current, &mut blocks, section, last)?;
    if section != Some(Section::Predicted) {
        return Err(parse_err(last, "document is missing sections"));
    }
    let [context, previous, predicted] = blocks;
    if previous.len() != 1 || predicted.len() != 1 {
        return Err(parse_err(
            first_line,
            "#Previous_Packet and #Predicted_Packet must hold exactly one #BLOCK",
        ));
    }
    Ok(Document {
        context,
        prompt: previous[0],
        predicted: predicted[0],
        first_line,
    })
}

fn split_documents(text: &str) -> Vec<Vec<(usize, &str)>> {
    let mut docs = Vec::new();
    let mut cur = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                docs.push(core::mem::take(&mut cur));
            }
        } else {
            cur.push((i + 1, line));
        }
    }
    if !cur.is_empty() {
        docs.push(cur);
    }
    docs
}

fn pair_documents(chosen: Document, rejected: Document) -> Result<FinetuneSample> {
    if chosen.context != rejected.context || chosen.prompt != rejected.prompt {
        return Err(parse_err(
            rejected.first_line,
            "rejected document does not share the chosen document's context and prompt",
        ));
    }
    let diff = chosen.predicted.diff(&rejected.predicted);
    let [field] = diff[..] else {
        return Err(parse_err(
            rejected.first_line,
            format!("chosen and rejected differ in {} fields, expected 1", diff.len()),
        ));
    };
    Ok(FinetuneSample {
        context: chosen.context,
        prompt: chosen.prompt,
        chosen: chosen.predicted,
        rejected: rejected.predicted,
        perturbed_field: field,
    })
}

/// Parses the output of [`render_samples`].
pub fn parse_samples(text: &str) -> Result<Vec<FinetuneSample>> {
    let docs = split_documents(text);
    if !docs.len().is_multiple_of(2) {
        let line = docs.last().and_then(|d| d.first()).map_or(0, |l| l.0);
        return Err(parse_err(line, "chosen document without a rejected partner"));
    }
    let mut out = Vec::with_capacity(docs.len() / 2);
    for pair in docs.chunks_exact(2) {
        let chosen = parse_document(&pair[0])?;
        let rejected = parse_document(&pair[1])?;
        out.push(pair_documents(chosen, rejected)?);
    }
    Ok(out)
}

/// Parses the output of [`render_sample`].
pub fn parse_sample(text: &str) -> Result<FinetuneSample> {
    let mut samples = parse_samples(text)?;
    match samples.len() {
        1 => Ok(samples.remove(0)),
        n => Err(parse_err(1, format!("expected one sample, found {n}"))),
    }
}

/// Per-field accuracy and the distribution of wrong-field counts, both in
/// percent rounded to two decimals.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FieldScoreReport {
    /// Indexed like [`Field::ALL`].
    pub accuracy: [f64; 6],
    /// Packets with 0, 1, 2, 3 and 4+ wrong fields.
    pub error_histogram: [f64; 5],
    pub packets: usize,
}

impl FieldScoreReport {
    pub fn field_accuracy(&self, field: Field) -> f64 {
        self.accuracy[field as usize]
    }
}

fn percent(count: usize, total: usize) -> f64 {
    libm::round(10_000.0 * count as f64 / total as f64) / 100.0
}

/// Scores predicted packets against the aligned ground truth.
pub fn score_fields(predicted: &[Packet], truth: &[Packet]) -> Result<FieldScoreReport> {
    if predicted.len() != truth.len() {
        return Err(dimension(format!(
            "{} predicted packets for {} ground-truth packets",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Input("no packets to score".into()));
    }
    let mut correct = [0usize; 6];
    let mut buckets = [0usize; 5];
    for (p, t) in predicted.iter().zip(truth) {
        let mut wrong = 0;
        for f in Field::ALL {
            if p.field_eq(t, f) {
                correct[f as usize] += 1;
            } else {
                wrong += 1;
            }
        }
        buckets[wrong.min(4)] += 1;
    }
    let n = truth.len();
    Ok(FieldScoreReport {
        accuracy: correct.map(|c| percent(c, n)),
        error_histogram: buckets.map(|c| percent(c, n)),
        packets: n,
    })
}

impl fmt::Display for FieldScoreReport {
    /// Key-value rows: one per field, then one per error bucket.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for field in Field::ALL {
            writeln!(f, "{}: {:.2}", field.name(), self.field_accuracy(field))?;
        }
        for (i, label) in ["0 errors", "1 error", "2 errors", "3 errors", "4+ errors"]
            .iter()
            .enumerate()
        {
            writeln!(f, "{label}: {:.2}", self.error_histogram[i])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn pkt(sport: u16, seq: u32) -> Packet {
        Packet {
            sport,
            dport: 5760,
            flags: TcpFlags::parse("PA").unwrap(),
            seq,
            ack: 2000,
            length: 52,
        }
    }

    fn ev(t: f64, src: &str, sport: u16, dst: &str, dport: u16, flags: &str) -> PacketEvent {
        PacketEvent {
            timestamp: t,
            src: src.into(),
            dst: dst.into(),
            packet: Packet {
                sport,
                dport,
                flags: TcpFlags::parse(flags).unwrap(),
                seq: (t * 10.0) as u32,
                ack: 0,
                length: 10,
            },
        }
    }

    #[test]
    fn flags_canonical_order() {
        let f = TcpFlags::parse("AP").unwrap();
        assert_eq!(f.to_string(), "PA");
        assert!(TcpFlags::parse("SS").is_err());
        assert!(TcpFlags::parse("X").is_err());
        assert_eq!(TcpFlags::parse("").unwrap().to_string(), "");
    }

    #[test]
    fn interleaved_tuples_split() {
        let events = vec![
            ev(0.0, "10.0.0.1", 1000, "10.0.0.2", 80, "S"),
            ev(0.5, "10.0.0.3", 2000, "10.0.0.2", 80, "S"),
            ev(0.2, "10.0.0.2", 80, "10.0.0.1", 1000, "SA"),
            ev(0.7, "10.0.0.2", 80, "10.0.0.3", 2000, "SA"),
            ev(0.9, "10.0.0.1", 1000, "10.0.0.2", 80, "A"),
        ];
        let s = extract_sessions(&events, DEFAULT_IDLE_TIMEOUT);
        assert_eq!(s.len(), 2);
        let seqs: Vec<u32> = s[0].packets().map(|p| p.seq).collect();
        assert_eq!(seqs, vec![0, 2, 9]);
        let seqs: Vec<u32> = s[1].packets().map(|p| p.seq).collect();
        assert_eq!(seqs, vec![5, 7]);
        assert_eq!(s[1].packets[1].index_in_session, 1);
        assert_eq!(s[1].packets[1].session_id, "session-1");
    }

    #[test]
    fn single_packet_session() {
        let s = extract_sessions(&[ev(1.0, "a", 1, "b", 2, "S")], DEFAULT_IDLE_TIMEOUT);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].packets.len(), 1);
    }

    #[test]
    fn idle_gap_splits() {
        let events = vec![ev(0.0, "a", 1, "b", 2, "A"), ev(120.0, "a", 1, "b", 2, "A")];
        assert_eq!(extract_sessions(&events, 60.0).len(), 2);
        assert_eq!(extract_sessions(&events, 200.0).len(), 1);
    }

    #[test]
    fn fin_and_rst_close() {
        let events = vec![
            ev(0.0, "a", 1, "b", 2, "A"),
            ev(1.0, "b", 2, "a", 1, "FA"),
            ev(2.0, "a", 1, "b", 2, "A"),
            ev(3.0, "a", 1, "b", 2, "R"),
            ev(4.0, "a", 1, "b", 2, "S"),
        ];
        let s = extract_sessions(&events, 60.0);
        assert_eq!(s.iter().map(|s| s.packets.len()).collect::<Vec<_>>(), vec![2, 2, 1]);
    }

    #[test]
    fn udp_sessions_use_timeout_only() {
        let events = vec![ev(0.0, "a", 1, "b", 2, ""), ev(1.0, "b", 2, "a", 1, "")];
        assert_eq!(extract_sessions(&events, 60.0).len(), 1);
    }

    fn session(n: usize) -> Vec<Packet> {
        (0..n).map(|i| pkt(14550, i as u32)).collect()
    }

    #[test]
    fn window_counts() {
        let w = build_windows(&session(5), 2);
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].prompt.seq, 2);
        assert_eq!(w[1].prompt.seq, 3);
        assert_eq!(w[1].next.seq, 4);
        assert_eq!(w[1].context.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![1, 2]);
        assert!(build_windows(&session(3), 2).is_empty());
        assert_eq!(build_windows(&session(6), 0).len(), 5);
        assert!(build_windows(&[], 0).is_empty());
    }

    fn triple() -> Triple {
        Triple {
            context: vec![pkt(14550, 1)],
            prompt: pkt(14550, 2),
            next: pkt(14550, 3),
        }
    }

    #[test]
    fn forced_sport_increment() {
        let s = make_pair_with(&triple(), Field::Sport, Perturbation::Offset(1)).unwrap();
        assert_eq!(s.rejected.sport, 14551);
        assert_eq!(s.chosen.diff(&s.rejected), vec![Field::Sport]);
    }

    #[test]
    fn perturbations_wrap() {
        let p = Packet {
            sport: 65535,
            seq: 0,
            ..pkt(0, 0)
        };
        assert_eq!(perturb(&p, Field::Sport, Perturbation::Offset(1)).unwrap().sport, 0);
        assert_eq!(perturb(&p, Field::Seq, Perturbation::Offset(-1)).unwrap().seq, u32::MAX);
        assert!(perturb(&p, Field::Length, Perturbation::Length(52)).is_err());
        assert!(perturb(&p, Field::Flags, Perturbation::Offset(1)).is_err());
        assert!(perturb(&p, Field::Sport, Perturbation::Offset(65536)).is_err());
    }

    #[test]
    fn pair_is_seeded() {
        assert_eq!(make_pair(&triple(), 42), make_pair(&triple(), 42));
    }

    #[test]
    fn render_layout() {
        let s = make_pair_with(&triple(), Field::Ack, Perturbation::Offset(5)).unwrap();
        let text = render_sample(&s);
        let expected_block = |seq: u32, ack: u32| {
            format!("#BLOCK\nsport:14550\ndport:5760\nflags:PA\nseq:{seq}\nack:{ack}\nlength:52\n")
        };
        let chosen = format!(
            "#Context\n{}#Previous_Packet\n{}#Predicted_Packet\n{}",
            expected_block(1, 2000),
            expected_block(2, 2000),
            expected_block(3, 2000)
        );
        let rejected = format!(
            "#Context\n{}#Previous_Packet\n{}#Predicted_Packet\n{}",
            expected_block(1, 2000),
            expected_block(2, 2000),
            expected_block(3, 2005)
        );
        assert_eq!(text, format!("{chosen}\n{rejected}"));
        assert_eq!(parse_sample(&text).unwrap(), s);
    }

    #[test]
    fn empty_context_round_trips() {
        let t = Triple {
            context: vec![],
            ..triple()
        };
        let s = make_pair(&t, 1);
        let text = render_sample(&s);
        assert!(text.starts_with("#Context\n#Previous_Packet\n"));
        assert_eq!(parse_sample(&text).unwrap(), s);
    }

    #[test]
    fn missing_key_is_error() {
        let s = make_pair(&triple(), 1);
        let text = render_sample(&s).replacen("ack:2000\n", "", 1);
        let err = parse_sample(&text).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
    }

    #[test]
    fn duplicate_and_unknown_are_errors() {
        let s = make_pair(&triple(), 1);
        let text = render_sample(&s);
        let dup = text.replacen("ack:2000\n", "ack:2000\nack:2000\n", 1);
        assert!(matches!(parse_sample(&dup), Err(Error::Parse { line: 8, .. })));
        let unknown = text.replacen("#Previous_Packet", "#Prompt", 1);
        assert!(matches!(parse_sample(&unknown), Err(Error::Parse { line: 9, .. })));
    }

    #[test]
    fn multiple_samples_round_trip() {
        let samples: Vec<FinetuneSample> = (0..5).map(|i| make_pair(&triple(), i)).collect();
        assert_eq!(parse_samples(&render_samples(&samples)).unwrap(), samples);
        assert!(parse_sample(&render_samples(&samples)).is_err());
    }

    #[test]
    fn identity_scores_hundred() {
        let truth = session(10);
        let r = score_fields(&truth, &truth).unwrap();
        assert_eq!(r.accuracy, [100.0; 6]);
        assert_eq!(r.error_histogram, [100.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn one_wrong_ack() {
        let truth = session(2);
        let mut pred = truth.clone();
        pred[1].ack += 1;
        let r = score_fields(&pred, &truth).unwrap();
        assert_eq!(r.field_accuracy(Field::Ack), 50.0);
        assert_eq!(r.field_accuracy(Field::Seq), 100.0);
        assert_eq!(r.error_histogram, [50.0, 50.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn score_mismatch_is_error() {
        assert!(matches!(score_fields(&session(1), &session(2)), Err(Error::Dimension(_))));
    }

    #[test]
    fn report_rows() {
        let truth = session(3);
        let text = score_fields(&truth, &truth).unwrap().to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                "sport: 100.00",
                "dport: 100.00",
                "flags: 100.00",
                "seq: 100.00",
                "ack: 100.00",
                "length: 100.00",
                "0 errors: 100.00",
                "1 error: 0.00",
                "2 errors: 0.00",
                "3 errors: 0.00",
                "4+ errors: 0.00",
            ]
        );
    }
}
