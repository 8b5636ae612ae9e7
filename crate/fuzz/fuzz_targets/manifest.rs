#![no_main]

use duca::data::manifest::DomainManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = DomainManifest::parse(text) {
        // whatever parses must survive a round trip
        let again = DomainManifest::parse(&m.to_string()).expect("formatted manifest parses");
        assert_eq!(again, m);
    }
});
