#![no_main]

use duca::data::loaders::parse_pixel_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_pixel_csv(data, (1, 2, 2));
    let _ = parse_pixel_csv(data, (3, 2, 2));
});
