//! Rule-based transition-signal detection over a short conversation.
//!
//! cargo run --example detect_signals

use std::sync::Arc;

use stagewise::clock::LogicalClock;
use stagewise::detector::{CueLexicon, Detector, DetectorConfig};
use stagewise::session::{EventBody, SessionLog};
use stagewise::stage::{next_stage, resolve};

fn main() {
    let detector = Detector::new(Arc::new(CueLexicon::bundled()), DetectorConfig::default());
    let clock = LogicalClock::default();
    let mut log = SessionLog::new("demo");
    let turns = [
        "I've been feeling overwhelmed by work lately.",
        "I don't want to talk about that.",
        "I'd rather not talk about it, never mind.",
        "I feel trapped, like when my business failed.",
        "So what should I do about it?",
        "That won't work for me.",
        "Thank you for listening. Goodbye.",
    ];
    for text in turns {
        let stage = log.state().stage;
        let detection = detector.detect(log.state(), text).expect("session is open");
        let signal = resolve(stage, &detection.candidates).expect("stay is always a candidate");
        let to = next_stage(stage, signal.kind);
        let cues: Vec<&str> = detection.hits.iter().map(|h| h.pattern.as_str()).collect();
        println!("{text}");
        println!(
            "    {} -> {} via {} (confidence {:.2}, avoidance {}, cues {:?})",
            stage, to, signal.kind, signal.confidence, detection.avoidance_counter, cues
        );
        // The state only changes through recorded events.
        log.record(EventBody::UserMsg { text: text.to_string() }, &clock)
            .unwrap();
        log.record(detection.to_event(), &clock).unwrap();
        log.record(
            EventBody::Transition {
                from: stage,
                signal,
                to,
            },
            &clock,
        )
        .unwrap();
    }
}
