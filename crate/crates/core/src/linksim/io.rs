//! CSV and compact binary forms of a [`SessionLog`]. Simulator truth is not
//! exported.

use std::collections::HashMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{Basis, ClickFlag, ClickRecord, Intensity, LinkError, PulseRecord, SessionLog};

const MAGIC: &[u8; 8] = b"QKDLOG1\0";

#[derive(Serialize, Deserialize)]
struct ClickRow {
    train: u32,
    slot: u32,
    detector: u8,
    basis: String,
    bit: u8,
    flag: String,
}

#[derive(Serialize, Deserialize)]
struct PulseRow {
    train: u32,
    slot: u32,
    basis: String,
    bit: u8,
    intensity: String,
}

fn basis_str(b: Basis) -> &'static str {
    match b {
        Basis::Z => "Z",
        Basis::X => "X",
    }
}

fn parse_basis(s: &str) -> Result<Basis, LinkError> {
    match s {
        "Z" => Ok(Basis::Z),
        "X" => Ok(Basis::X),
        _ => Err(LinkError::Io(format!("bad basis `{s}`"))),
    }
}

fn intensity_str(i: Intensity) -> &'static str {
    match i {
        Intensity::Mu => "mu",
        Intensity::Nu1 => "nu1",
        Intensity::Nu2 => "nu2",
    }
}

fn parse_intensity(s: &str) -> Result<Intensity, LinkError> {
    match s {
        "mu" => Ok(Intensity::Mu),
        "nu1" => Ok(Intensity::Nu1),
        "nu2" => Ok(Intensity::Nu2),
        _ => Err(LinkError::Io(format!("bad intensity `{s}`"))),
    }
}

/// Bob's click log: `train,slot,detector,basis,bit,flag`.
pub fn write_clicks_csv<W: Write>(log: &SessionLog, w: W) -> Result<(), LinkError> {
    let mut wr = csv::Writer::from_writer(w);
    for c in &log.clicks {
        wr.serialize(ClickRow {
            train: c.train,
            slot: c.slot,
            detector: c.detector,
            basis: basis_str(c.bob_basis).into(),
            bit: c.bob_bit,
            flag: c.flag.as_str().into(),
        })?;
    }
    wr.flush()?;
    Ok(())
}

/// Alice's pulse log: `train,slot,basis,bit,intensity`. Needs a log recorded with pulses.
pub fn write_pulses_csv<W: Write>(log: &SessionLog, w: W) -> Result<(), LinkError> {
    let pulses = log
        .pulses
        .as_ref()
        .ok_or_else(|| LinkError::Io("session was recorded without pulse records".into()))?;
    let mut wr = csv::Writer::from_writer(w);
    for p in pulses {
        wr.serialize(PulseRow {
            train: p.train,
            slot: p.slot,
            basis: basis_str(p.basis).into(),
            bit: p.bit,
            intensity: intensity_str(p.intensity).into(),
        })?;
    }
    wr.flush()?;
    Ok(())
}

/// Join Alice's pulse CSV and Bob's click CSV back into a session log.
pub fn read_csv<R1: Read, R2: Read>(pulses: R1, clicks: R2, four_state_bob: bool) -> Result<SessionLog, LinkError> {
    let mut pulse_recs = Vec::new();
    for row in csv::Reader::from_reader(pulses).deserialize() {
        let row: PulseRow = row?;
        pulse_recs.push(PulseRecord {
            train: row.train,
            slot: row.slot,
            basis: parse_basis(&row.basis)?,
            bit: row.bit & 1,
            intensity: parse_intensity(&row.intensity)?,
        });
    }
    let train_length = pulse_recs.iter().map(|p| p.slot + 1).max().unwrap_or(0);
    let n_trains = pulse_recs.iter().map(|p| p.train + 1).max().unwrap_or(0);
    let mut train_counts = vec![[0u64; 3]; n_trains as usize];
    let mut index = HashMap::with_capacity(pulse_recs.len());
    let mut running = vec![[0u32; 3]; n_trains as usize];
    let mut sorted = pulse_recs.clone();
    sorted.sort_by_key(|p| (p.train, p.slot));
    for p in &sorted {
        let t = p.train as usize;
        running[t][p.intensity.index()] += 1;
        train_counts[t][p.intensity.index()] += 1;
        index.insert((p.train, p.slot), (*p, running[t]));
    }

    let mut log = SessionLog {
        train_length,
        n_trains,
        four_state_bob,
        train_counts,
        pulses: Some(sorted),
        clicks: Vec::new(),
    };
    for row in csv::Reader::from_reader(clicks).deserialize() {
        let row: ClickRow = row?;
        let (p, sent_through) = index
            .get(&(row.train, row.slot))
            .ok_or_else(|| LinkError::Io(format!("click at train {} slot {} has no pulse", row.train, row.slot)))?;
        log.clicks.push(ClickRecord {
            train: row.train,
            slot: row.slot,
            detector: row.detector & 1,
            bob_basis: parse_basis(&row.basis)?,
            bob_bit: row.bit & 1,
            flag: ClickFlag::parse(&row.flag).ok_or_else(|| LinkError::Io(format!("bad flag `{}`", row.flag)))?,
            alice_basis: p.basis,
            alice_bit: p.bit,
            intensity: p.intensity,
            sent_through: *sent_through,
            truth: None,
        });
    }
    log.clicks.sort_by_key(|c| (c.train, c.slot));
    Ok(log)
}

fn flag_code(f: ClickFlag) -> u8 {
    match f {
        ClickFlag::Single => 0,
        ClickFlag::Double => 1,
        ClickFlag::Dark => 2,
    }
}

/// Compact little-endian stream of the joined click log and per-train counts.
pub fn write_binary<W: Write>(log: &SessionLog, mut w: W) -> Result<(), LinkError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(log.train_length)?;
    w.write_u32::<LittleEndian>(log.n_trains)?;
    w.write_u8(u8::from(log.four_state_bob))?;
    w.write_u32::<LittleEndian>(log.train_counts.len() as u32)?;
    for c in &log.train_counts {
        for v in c {
            w.write_u64::<LittleEndian>(*v)?;
        }
    }
    w.write_u64::<LittleEndian>(log.clicks.len() as u64)?;
    for c in &log.clicks {
        w.write_u32::<LittleEndian>(c.train)?;
        w.write_u32::<LittleEndian>(c.slot)?;
        let packed = c.detector & 1
            | c.bob_basis.index() << 1
            | (c.bob_bit & 1) << 2
            | c.alice_basis.index() << 3
            | (c.alice_bit & 1) << 4
            | flag_code(c.flag) << 5;
        w.write_u8(packed)?;
        w.write_u8(c.intensity.index() as u8)?;
        for v in c.sent_through {
            w.write_u32::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<SessionLog, LinkError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LinkError::Io("not a session log stream".into()));
    }
    let train_length = r.read_u32::<LittleEndian>()?;
    let n_trains = r.read_u32::<LittleEndian>()?;
    let four_state_bob = r.read_u8()? != 0;
    let n_counts = r.read_u32::<LittleEndian>()?;
    let mut train_counts = Vec::with_capacity(n_counts as usize);
    for _ in 0..n_counts {
        let mut c = [0u64; 3];
        for v in &mut c {
            *v = r.read_u64::<LittleEndian>()?;
        }
        train_counts.push(c);
    }
    let n_clicks = r.read_u64::<LittleEndian>()?;
    let mut clicks = Vec::with_capacity(n_clicks.min(1 << 24) as usize);
    for _ in 0..n_clicks {
        let train = r.read_u32::<LittleEndian>()?;
        let slot = r.read_u32::<LittleEndian>()?;
        let packed = r.read_u8()?;
        let intensity = Intensity::from_index(usize::from(r.read_u8()?))
            .ok_or_else(|| LinkError::Io("bad intensity code".into()))?;
        let mut sent_through = [0u32; 3];
        for v in &mut sent_through {
            *v = r.read_u32::<LittleEndian>()?;
        }
        let flag = match packed >> 5 {
            0 => ClickFlag::Single,
            1 => ClickFlag::Double,
            2 => ClickFlag::Dark,
            _ => return Err(LinkError::Io("bad flag code".into())),
        };
        clicks.push(ClickRecord {
            train,
            slot,
            detector: packed & 1,
            bob_basis: Basis::from_bit(packed >> 1 & 1 == 1),
            bob_bit: packed >> 2 & 1,
            flag,
            alice_basis: Basis::from_bit(packed >> 3 & 1 == 1),
            alice_bit: packed >> 4 & 1,
            intensity,
            sent_through,
            truth: None,
        });
    }
    Ok(SessionLog { train_length, n_trains, four_state_bob, train_counts, pulses: None, clicks })
}
