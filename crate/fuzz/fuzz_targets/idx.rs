#![no_main]

use duca::data::loaders::decode_idx;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = decode_idx(data);
});
