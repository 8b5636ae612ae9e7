#![no_main]

use duca::buffer::{BufferEntry, ReservoirBuffer};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(buf) = ReservoirBuffer::<BufferEntry>::decode(data) {
        let again = ReservoirBuffer::<BufferEntry>::decode(&buf.encode()).expect("re-encoded buffer decodes");
        assert_eq!(again.len(), buf.len());
        assert_eq!(again.seen(), buf.seen());
    }
});
