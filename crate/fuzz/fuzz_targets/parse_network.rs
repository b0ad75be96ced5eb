#![no_main]

use libfuzzer_sys::fuzz_target;
use resflow::NetworkParams;

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = NetworkParams::from_json_slice(data) {
        if net.input_dim() <= 64 {
            let out = net.eval(&vec![0.5; net.input_dim()]).unwrap();
            assert_eq!(out.len(), net.output_dim());
        }
        let back = NetworkParams::from_json_str(&net.to_json()).unwrap();
        assert_eq!(back, net);
    }
});
