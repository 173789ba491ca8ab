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
use isru_core::geometry::Pose;
use isru_link::*;

fn msgs() -> Vec<(u64, Direction, LinkMessage)> {
    (0..20)
        .map(|i| {
            let dir = if i % 3 == 0 { Direction::Downlink } else { Direction::Uplink };
            let kind = if i % 2 == 0 {
                MessageKind::PoseRef {
                    pose: Pose::from_translation(i as f64, 0.5, -0.25),
                }
            } else {
                MessageKind::GripperCmd {
                    command: GripperCommand::Close,
                }
            };
            (i * 3, dir, LinkMessage { seq: i, timestamp: i as f64 * 0.03, kind })
        })
        .collect()
}

#[test]
fn capture_file_round_trip() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let mut w = CaptureWriter::new(std::fs::File::create(file.path()).unwrap(), 100.0).unwrap();
    for (tick, dir, m) in msgs() {
        w.record(tick, dir, &m).unwrap();
    }
    assert_eq!(w.records(), 20);
    w.finish().unwrap();

    let r = CaptureReader::new(std::fs::File::open(file.path()).unwrap()).unwrap();
    assert_eq!(r.tick_rate(), 100.0);
    let got = r.read_all().unwrap();
    let want: Vec<CaptureRecord> = msgs()
        .into_iter()
        .map(|(tick, direction, message)| CaptureRecord { tick, direction, message })
        .collect();
    assert_eq!(got, want);
}

#[test]
fn truncated_capture_is_an_error() {
    let mut w = CaptureWriter::new(Vec::new(), 100.0).unwrap();
    for (tick, dir, m) in msgs() {
        w.record(tick, dir, &m).unwrap();
    }
    let bytes = w.finish().unwrap();
    let cut = &bytes[..bytes.len() - 5];
    assert!(matches!(
        CaptureReader::new(cut).unwrap().read_all(),
        Err(LinkError::Capture(_))
    ));
    assert!(CaptureReader::new(&b"nope"[..]).is_err());
}

#[test]
fn corrupt_frame_in_capture_is_reported() {
    let mut w = CaptureWriter::new(Vec::new(), 100.0).unwrap();
    let (_, _, m) = msgs().remove(0);
    w.record(0, Direction::Uplink, &m).unwrap();
    let mut bytes = w.finish().unwrap();
    let n = bytes.len();
    bytes[n - 10] ^= 0xff;
    assert!(matches!(
        CaptureReader::new(&bytes[..]).unwrap().read_all(),
        Err(LinkError::Codec(CodecError::ChecksumMismatch))
    ));
}
