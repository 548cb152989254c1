//! Split a large coded frame into FU-A fragments, wrap them in packets,
//! and put it back together.

use cia_lab::packet::{fragment_unit, packetize, reassemble, CameraId, Endpoint, MacAddr, PayloadUnit, WireLayout};

fn main() -> cia_lab::Result<()> {
    let data: Vec<u8> = (0..172_000u32).map(|i| (i % 251) as u8).collect();
    let unit = PayloadUnit::new(5, data)?;
    let fragments = fragment_unit(&unit, 1432)?;
    println!("{} byte IDR unit -> {} fragments", unit.len(), fragments.len());

    let first = fragments.first().and_then(|f| f.fu_header()).expect("fragmented");
    let last = fragments.last().and_then(|f| f.fu_header()).expect("fragmented");
    println!("first header start={} end={}", first.start(), first.end());
    println!("last header  start={} end={}", last.start(), last.end());

    let endpoint = Endpoint {
        src: MacAddr([0x02, 0xca, 0, 0, 0, 1]),
        dst: MacAddr([0x02, 0xd1, 0, 0, 0, 1]),
        source_id: CameraId(1),
    };
    let packets = packetize(&fragments, endpoint, WireLayout::TRANSPORT_ONLY, 250, |i| 1_000 + i as u64 * 20);
    let seqs: Vec<u8> = packets.iter().take(8).map(|p| p.seq).collect();
    println!("sequence numbers wrap: {seqs:?}");
    println!(
        "wire lengths: first {} last {}",
        packets[0].length,
        packets.last().unwrap().length
    );

    let back = reassemble(&fragments)?;
    assert_eq!(back, unit);
    println!("reassembled {} bytes, identical to the input", back.len());
    Ok(())
}
