#![no_main]

use duca::nn::{decode_checkpoint, encode_checkpoint, Classifier};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = decode_checkpoint::<f32>(data) {
        let again: Classifier = decode_checkpoint(&encode_checkpoint(&net)).expect("re-encoded checkpoint decodes");
        let bits = |n: &Classifier| n.flat_state().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&again), bits(&net));
    }
});
