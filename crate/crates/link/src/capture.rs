/*
Copyright 2026 The isru-teleop Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Capture files: a header then tick-stamped frames.
//!
//! Header: magic u32 `0x54534C43`, version u8, tick rate f64.
//! Record: tick u64, direction u8 (0 uplink, 1 downlink), frame length u32, frame.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::codec::{decode, encode};
use crate::message::LinkMessage;
use crate::LinkError;

pub const CAPTURE_MAGIC: u32 = 0x5453_4C43;
pub const CAPTURE_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Station to robot.
    Uplink,
    /// Robot to station.
    Downlink,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureRecord {
    pub tick: u64,
    pub direction: Direction,
    pub message: LinkMessage,
}

pub struct CaptureWriter<W: Write> {
    out: W,
    records: u64,
}

impl<W: Write> CaptureWriter<W> {
    pub fn new(mut out: W, tick_rate: f64) -> io::Result<Self> {
        out.write_all(&CAPTURE_MAGIC.to_le_bytes())?;
        out.write_all(&[CAPTURE_VERSION])?;
        out.write_all(&tick_rate.to_le_bytes())?;
        Ok(Self { out, records: 0 })
    }

    pub fn record(&mut self, tick: u64, direction: Direction, msg: &LinkMessage) -> io::Result<()> {
        let frame = encode(msg);
        self.out.write_all(&tick.to_le_bytes())?;
        self.out.write_all(&[match direction {
            Direction::Uplink => 0,
            Direction::Downlink => 1,
        }])?;
        self.out.write_all(&(frame.len() as u32).to_le_bytes())?;
        self.out.write_all(&frame)?;
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub struct CaptureReader<R: Read> {
    input: R,
    tick_rate: f64,
}

impl<R: Read> CaptureReader<R> {
    pub fn new(mut input: R) -> Result<Self, LinkError> {
        let mut head = [0u8; 13];
        input.read_exact(&mut head).map_err(|e| LinkError::Capture(e.to_string()))?;
        if u32::from_le_bytes(head[..4].try_into().unwrap()) != CAPTURE_MAGIC {
            return Err(LinkError::Capture("not a capture file".into()));
        }
        if head[4] != CAPTURE_VERSION {
            return Err(LinkError::Capture(format!("unsupported capture version {}", head[4])));
        }
        let tick_rate = f64::from_le_bytes(head[5..].try_into().unwrap());
        Ok(Self { input, tick_rate })
    }

    pub fn tick_rate(&self) -> f64 {
        self.tick_rate
    }

    /// Next record, `Ok(None)` at a clean end of file.
    pub fn next_record(&mut self) -> Result<Option<CaptureRecord>, LinkError> {
        let mut head = [0u8; 13];
        match read_full(&mut self.input, &mut head) {
            Ok(0) => return Ok(None),
            Ok(13) => {}
            Ok(_) => return Err(LinkError::Capture("truncated record header".into())),
            Err(e) => return Err(LinkError::Capture(e.to_string())),
        }
        let tick = u64::from_le_bytes(head[..8].try_into().unwrap());
        let direction = match head[8] {
            0 => Direction::Uplink,
            1 => Direction::Downlink,
            d => return Err(LinkError::Capture(format!("bad direction {d}"))),
        };
        let len = u32::from_le_bytes(head[9..].try_into().unwrap()) as usize;
        let mut frame = vec![0u8; len];
        self.input
            .read_exact(&mut frame)
            .map_err(|_| LinkError::Capture("truncated frame".into()))?;
        let message = decode(&frame)?;
        Ok(Some(CaptureRecord {
            tick,
            direction,
            message,
        }))
    }

    pub fn read_all(mut self) -> Result<Vec<CaptureRecord>, LinkError> {
        let mut out = Vec::new();
        while let Some(r) = self.next_record()? {
            out.push(r);
        }
        Ok(out)
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}
