#![no_main]

use libfuzzer_sys::fuzz_target;
use randhorizon::policy::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ck) = Checkpoint::from_json(text) {
        assert_eq!(Checkpoint::from_json(&ck.to_json()).expect("round trip"), ck);
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).expect("round trip"), ck);
    }
});
