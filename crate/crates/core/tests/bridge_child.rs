//! Child-process bridge transport, exercised against an identity server
//! re-implemented in Python. Passing proves the wire layout (magic,
//! little-endian lengths, f32 tensor encoding) independently of the Rust
//! codec on both ends.

use grasp_core::bridge::{connect, BridgeEndpoint};
use grasp_core::image::{ImageTensor, PixelRange};
use grasp_core::models::{DimsSpec, ManipulationModel};
use grasp_core::rng::XorShift64;

const PY_IDENTITY_SERVER: &str = r#"
import struct, sys

MAGIC = b"GRSP"

def read_exact(n):
    data = sys.stdin.buffer.read(n)
    if len(data) != n:
        sys.exit(0)
    return data

def write_frame(msg_type, payload):
    sys.stdout.buffer.write(MAGIC + bytes([1, msg_type]) + struct.pack("<I", len(payload)) + payload)
    sys.stdout.buffer.flush()

def read_frame():
    header = read_exact(10)
    assert header[:4] == MAGIC, header
    assert header[4] == 1
    (length,) = struct.unpack("<I", header[6:10])
    return header[5], read_exact(length)

def tensor_end(payload, start):
    rank = payload[start + 1]
    dims = struct.unpack("<" + "I" * rank, payload[start + 2 : start + 2 + 4 * rank])
    count = 1
    for d in dims:
        count *= d
    return start + 2 + 4 * rank + 4 * count

write_frame(0x01, struct.pack("<4f", 0.0, 0.0, 0.0, 1.0))  # HELLO: any dims, unit range
msg_type, _ = read_frame()
assert msg_type == 0x02, msg_type

while True:
    msg_type, payload = read_frame()
    if msg_type == 0x10:
        write_frame(0x11, payload)  # forward: echo the tensor
    elif msg_type == 0x20:
        first_end = tensor_end(payload, 0)
        write_frame(0x21, payload[first_end:])  # vjp: echo the cotangent
    else:
        write_frame(0x7F, b"unexpected message")
        sys.exit(1)
"#;

fn python3_available() -> bool {
    std::process::Command::new("python3")
        .arg("--version")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

#[test]
fn child_process_identity_server_round_trips() {
    if !python3_available() {
        eprintln!("skipping: python3 not available");
        return;
    }
    let model = connect(&BridgeEndpoint::ChildProcess {
        program: "python3".into(),
        args: vec!["-c".into(), PY_IDENTITY_SERVER.into()],
    })
    .expect("handshake with python identity server");
    assert_eq!(model.input_dims(), DimsSpec::Any);
    assert_eq!(model.output_range(), PixelRange::UNIT);

    let mut rng = XorShift64::from_seed(55);
    for _ in 0..10 {
        let data: Vec<f64> = (0..6 * 4).map(|_| rng.next_uniform() as f32 as f64).collect();
        let x = ImageTensor::new(6, 4, 1, data, PixelRange::UNIT).unwrap();
        let y = model.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());

        let cot: Vec<f64> = (0..6 * 4).map(|_| rng.next_symmetric() as f32 as f64).collect();
        let cot = ImageTensor::new(6, 4, 1, cot, PixelRange::UNIT).unwrap();
        let out = model.vjp(&x, &cot).unwrap();
        assert_eq!(out.data(), cot.data());
    }
}
