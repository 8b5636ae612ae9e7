#![no_main]

use duca::data::loaders::decode_cifar;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // CIFAR-10 (one label byte) and CIFAR-100 (coarse + fine) layouts
    let _ = decode_cifar(data, 1, 0);
    let _ = decode_cifar(data, 2, 1);
});
