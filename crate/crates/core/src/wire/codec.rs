//! Byte-exact framing.
//!
//! ```text
//! frame   = u32be(len(body)) body
//! body    = "sid=" hex16 " seq=" decimal " kind=" NAME " payload=" base64(binary)
//! binary  = kind-specific fields, then an 8-byte MAC trailer (all zero)
//! ```
//!
//! Binary field encodings: integers are big-endian fixed width unless noted;
//! `varint` is unsigned LEB128; an index list is `varint(count)` followed by
//! varint gaps from the previous index (the first from 0); a bit list is a
//! `u32be` bit count followed by the bits packed MSB-first.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;

use crate::error::{Error, Result};
use crate::key::{pack_msb_first, unpack_msb_first, Bits};
use crate::wire::message::*;

/// Largest binary payload accepted, MAC trailer included.
pub const MAX_PAYLOAD: usize = 1 << 24;
/// Largest body a reader will accept.
pub const MAX_BODY: usize = 4 * (MAX_PAYLOAD / 3 + 1) + 128;
pub const MAC_LEN: usize = 8;

pub fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8 & 0x7f) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

/// Gaps between consecutive indices, the first measured from zero.
pub fn delta_encode(indices: &[u64]) -> Result<Vec<u64>> {
    let mut prev = None;
    indices
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let d = match prev {
                None => x,
                Some(p) if x > p => x - p,
                Some(p) => {
                    return Err(Error::InvalidIndices {
                        position: i,
                        reason: format!("{x} does not exceed {p}"),
                    })
                }
            };
            prev = Some(x);
            Ok(d)
        })
        .collect()
}

pub fn delta_decode(deltas: &[u64]) -> Result<Vec<u64>> {
    let mut acc: Option<u64> = None;
    deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let next = match acc {
                None => d,
                Some(_) if d == 0 => {
                    return Err(Error::Codec(format!("zero gap at index {i}")));
                }
                Some(a) => a
                    .checked_add(d)
                    .ok_or_else(|| Error::Codec("index overflow".into()))?,
            };
            acc = Some(next);
            Ok(next)
        })
        .collect()
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn varint(&mut self, v: u64) {
        write_varint(&mut self.0, v);
    }
    fn indices(&mut self, idx: &[u64]) -> Result<()> {
        self.varint(idx.len() as u64);
        for d in delta_encode(idx)? {
            self.varint(d);
        }
        Ok(())
    }
    fn bits(&mut self, bits: &Bits) -> Result<()> {
        let n = u32::try_from(bits.len()).map_err(|_| Error::PayloadTooLarge(bits.len() / 8))?;
        self.u32(n);
        self.0.extend_from_slice(&pack_msb_first(bits));
        Ok(())
    }
    fn string(&mut self, s: &str) {
        self.varint(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn spans(&mut self, spans: &[Span]) {
        self.varint(spans.len() as u64);
        for s in spans {
            self.varint(s.pass.into());
            self.varint(s.block.into());
            self.varint(s.start.into());
            self.varint(s.len.into());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Codec("payload truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_be_bytes(self.take(16)?.try_into().unwrap()))
    }
    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.u8()?;
            let chunk = u64::from(b & 0x7f);
            if shift == 63 && chunk > 1 {
                return Err(Error::Codec("varint overflow".into()));
            }
            v |= chunk << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::Codec("varint overflow".into()))
    }
    fn varint_u32(&mut self) -> Result<u32> {
        u32::try_from(self.varint()?).map_err(|_| Error::Codec("value exceeds 32 bits".into()))
    }
    fn count(&mut self, min_item_bytes: usize) -> Result<usize> {
        let n = self.varint()? as usize;
        if n.saturating_mul(min_item_bytes) > self.buf.len() - self.pos {
            return Err(Error::Codec(format!("count {n} exceeds payload")));
        }
        Ok(n)
    }
    fn indices(&mut self) -> Result<Vec<u64>> {
        let n = self.count(1)?;
        let deltas = (0..n).map(|_| self.varint()).collect::<Result<Vec<_>>>()?;
        delta_decode(&deltas)
    }
    fn bits(&mut self) -> Result<Bits> {
        let n = self.u32()? as usize;
        let bytes = self.take(n.div_ceil(8))?;
        if !n.is_multiple_of(8) && bytes[n / 8] & (0xff >> (n % 8)) != 0 {
            return Err(Error::Codec("nonzero padding bits".into()));
        }
        unpack_msb_first(bytes, n)
    }
    fn string(&mut self) -> Result<String> {
        let n = self.count(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Codec(e.to_string()))
    }
    fn spans(&mut self) -> Result<Vec<Span>> {
        let n = self.count(4)?;
        (0..n)
            .map(|_| {
                Ok(Span {
                    pass: self.varint_u32()?,
                    block: self.varint_u32()?,
                    start: self.varint_u32()?,
                    len: self.varint_u32()?,
                })
            })
            .collect()
    }
}

const QUERY: u8 = 0;
const ANSWER: u8 = 1;

/// Kind-specific binary payload including the MAC trailer.
pub fn encode_payload(body: &Body) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    match body {
        Body::Hello(h) => {
            w.u32(h.version);
            w.u64(h.seed);
            w.u64(h.pulses);
            w.u64(h.blocks);
            w.string(&h.settings);
        }
        Body::SiftIndices(idx) | Body::SampleRequest(idx) => w.indices(idx)?,
        Body::SampleReveal(bits) => w.bits(bits)?,
        Body::ShuffleSeed {
            seed,
            pass,
            block_len,
        } => {
            w.u64(*seed);
            w.u32(*pass);
            w.u32(*block_len);
        }
        Body::BlockParity(ParityMsg::Query(spans)) => {
            w.u8(QUERY);
            w.spans(spans);
        }
        Body::BlockParity(ParityMsg::Answer(bits)) => {
            w.u8(ANSWER);
            w.bits(bits)?;
        }
        Body::Syndrome(SyndromeMsg::Query(spans)) => {
            w.u8(QUERY);
            w.spans(spans);
        }
        Body::Syndrome(SyndromeMsg::Answer(syndromes)) => {
            w.u8(ANSWER);
            w.varint(syndromes.len() as u64);
            let mut all = Bits::new();
            for s in syndromes {
                let width = u8::try_from(s.len())
                    .map_err(|_| Error::Codec(format!("syndrome of {} bits", s.len())))?;
                w.u8(width);
                all.extend_from_bitslice(s);
            }
            w.bits(&all)?;
        }
        Body::VerifyHash { key_seed, hash } => {
            w.u64(*key_seed);
            w.u128(*hash);
        }
        Body::PaSeed { seed, output_len } => {
            w.u64(*seed);
            w.u64(*output_len);
        }
        Body::Abort(reason) => w.string(reason),
        Body::Done(phase) => w.u8(*phase as u8),
    }
    w.0.extend_from_slice(&[0u8; MAC_LEN]);
    if w.0.len() > MAX_PAYLOAD {
        return Err(Error::PayloadTooLarge(w.0.len()));
    }
    Ok(w.0)
}

pub fn decode_payload(kind: Kind, payload: &[u8]) -> Result<Body> {
    if payload.len() > MAX_PAYLOAD {
        return Err(Error::PayloadTooLarge(payload.len()));
    }
    if payload.len() < MAC_LEN {
        return Err(Error::Codec("payload shorter than MAC trailer".into()));
    }
    let (fields, mac) = payload.split_at(payload.len() - MAC_LEN);
    if mac.iter().any(|&b| b != 0) {
        return Err(Error::Codec("MAC trailer must be zero".into()));
    }
    let mut r = Reader {
        buf: fields,
        pos: 0,
    };
    let body = match kind {
        Kind::Hello => Body::Hello(Hello {
            version: r.u32()?,
            seed: r.u64()?,
            pulses: r.u64()?,
            blocks: r.u64()?,
            settings: r.string()?,
        }),
        Kind::SiftIndices => Body::SiftIndices(r.indices()?),
        Kind::SampleRequest => Body::SampleRequest(r.indices()?),
        Kind::SampleReveal => Body::SampleReveal(r.bits()?),
        Kind::ShuffleSeed => Body::ShuffleSeed {
            seed: r.u64()?,
            pass: r.u32()?,
            block_len: r.u32()?,
        },
        Kind::BlockParity => match r.u8()? {
            QUERY => Body::BlockParity(ParityMsg::Query(r.spans()?)),
            ANSWER => Body::BlockParity(ParityMsg::Answer(r.bits()?)),
            m => return Err(Error::Codec(format!("unknown parity mode {m}"))),
        },
        Kind::Syndrome => match r.u8()? {
            QUERY => Body::Syndrome(SyndromeMsg::Query(r.spans()?)),
            ANSWER => {
                let n = r.count(1)?;
                let widths = (0..n).map(|_| r.u8()).collect::<Result<Vec<_>>>()?;
                let all = r.bits()?;
                let total: usize = widths.iter().map(|&w| w as usize).sum();
                if total != all.len() {
                    return Err(Error::Codec(format!(
                        "syndrome widths sum to {total}, bit list holds {}",
                        all.len()
                    )));
                }
                let mut at = 0;
                let syndromes = widths
                    .into_iter()
                    .map(|w| {
                        let s = all[at..at + w as usize].to_bitvec();
                        at += w as usize;
                        s
                    })
                    .collect();
                Body::Syndrome(SyndromeMsg::Answer(syndromes))
            }
            m => return Err(Error::Codec(format!("unknown syndrome mode {m}"))),
        },
        Kind::VerifyHash => Body::VerifyHash {
            key_seed: r.u64()?,
            hash: r.u128()?,
        },
        Kind::PaSeed => Body::PaSeed {
            seed: r.u64()?,
            output_len: r.u64()?,
        },
        Kind::Abort => Body::Abort(r.string()?),
        Kind::Done => {
            let tag = r.u8()?;
            Body::Done(
                Phase::from_u8(tag).ok_or_else(|| Error::Codec(format!("unknown phase {tag}")))?,
            )
        }
    };
    if r.pos != fields.len() {
        return Err(Error::Codec(format!(
            "{} trailing payload bytes",
            fields.len() - r.pos
        )));
    }
    Ok(body)
}

/// The text line of a frame, without the length prefix.
pub fn encode_body(m: &Message) -> Result<String> {
    let payload = encode_payload(&m.body)?;
    Ok(format!(
        "sid={:016x} seq={} kind={} payload={}",
        m.session_id,
        m.seq,
        m.kind().name(),
        BASE64.encode(payload)
    ))
}

/// Full frame: 4-byte big-endian body length, then the body.
pub fn encode(m: &Message) -> Result<Vec<u8>> {
    let body = encode_body(m)?;
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&(body.len() as u32).to_be_bytes());
    frame.extend_from_slice(body.as_bytes());
    Ok(frame)
}

pub fn decode_body(body: &[u8]) -> Result<Message> {
    if body.len() > MAX_BODY {
        return Err(Error::PayloadTooLarge(body.len()));
    }
    let text = std::str::from_utf8(body).map_err(|e| Error::Codec(e.to_string()))?;
    let mut fields = text.split(' ');
    let mut field = |name: &str| -> Result<&str> {
        let f = fields
            .next()
            .ok_or_else(|| Error::Codec(format!("missing field `{name}`")))?;
        f.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| Error::Codec(format!("expected `{name}=`, found `{f}`")))
    };
    let sid = field("sid")?;
    if sid.len() != 16 || !sid.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(Error::Codec(format!("bad session id `{sid}`")));
    }
    let session_id = u64::from_str_radix(sid, 16).map_err(|e| Error::Codec(e.to_string()))?;
    let seq_text = field("seq")?;
    if seq_text.is_empty() || !seq_text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Codec(format!("bad sequence number `{seq_text}`")));
    }
    let seq = seq_text
        .parse()
        .map_err(|e| Error::Codec(format!("bad sequence number: {e}")))?;
    let kind_name = field("kind")?;
    let kind = Kind::from_name(kind_name)
        .ok_or_else(|| Error::Codec(format!("unknown kind `{kind_name}`")))?;
    let payload = BASE64
        .decode(field("payload")?)
        .map_err(|e| Error::Codec(e.to_string()))?;
    if fields.next().is_some() {
        return Err(Error::Codec("trailing fields".into()));
    }
    Ok(Message {
        session_id,
        seq,
        body: decode_payload(kind, &payload)?,
    })
}

pub fn decode(frame: &[u8]) -> Result<Message> {
    if frame.len() < 4 {
        return Err(Error::Codec("frame shorter than length prefix".into()));
    }
    let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
    if frame.len() - 4 != len {
        return Err(Error::Codec(format!(
            "length prefix {len} but {} body bytes",
            frame.len() - 4
        )));
    }
    decode_body(&frame[4..])
}

#[cfg(test)]
mod tests {
    use bitvec::prelude::*;
    use proptest::prelude::*;

    use super::*;

    fn msg(body: Body) -> Message {
        Message {
            session_id: 0x0123_4567_89ab_cdef,
            seq: 5,
            body,
        }
    }

    #[test]
    fn delta_form() {
        assert_eq!(delta_encode(&[3, 7, 9]).unwrap(), vec![3, 4, 2]);
        assert_eq!(delta_decode(&[3, 4, 2]).unwrap(), vec![3, 7, 9]);
        assert!(delta_encode(&[3, 3]).is_err());
        assert!(delta_decode(&[3, 0]).is_err());
    }

    #[test]
    fn varint_bytes() {
        let mut v = Vec::new();
        write_varint(&mut v, 300);
        assert_eq!(v, vec![0xac, 0x02]);
    }

    #[test]
    fn abort_with_empty_reason_round_trips() {
        let m = msg(Body::Abort(String::new()));
        assert_eq!(decode(&encode(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn sift_indices_payload_is_delta_varint() {
        let p = encode_payload(&Body::SiftIndices(vec![3, 7, 9])).unwrap();
        assert_eq!(p, vec![3, 3, 4, 2, 0, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn rejects_nonzero_mac_and_garbage() {
        let mut p = encode_payload(&Body::Done(Phase::Final)).unwrap();
        *p.last_mut().unwrap() = 1;
        assert!(decode_payload(Kind::Done, &p).is_err());
        assert!(decode_body(b"sid=0 seq=1 kind=Done payload=").is_err());
        assert!(decode_body(b"sid=0000000000000000 seq=1 kind=Nope payload=").is_err());
        assert!(decode(&[0, 0, 0, 9, b'x']).is_err());
    }

    #[test]
    fn oversize_payload_rejected() {
        let bits: Bits = bitvec![u64, Lsb0; 1; 8 * (MAX_PAYLOAD + 1)];
        assert!(matches!(
            encode(&msg(Body::SampleReveal(bits))),
            Err(Error::PayloadTooLarge(_))
        ));
    }

    fn arb_bits(max: usize) -> impl Strategy<Value = Bits> {
        proptest::collection::vec(any::<bool>(), 0..max).prop_map(|v| v.into_iter().collect())
    }

    fn arb_indices() -> impl Strategy<Value = Vec<u64>> {
        proptest::collection::btree_set(any::<u64>(), 0..40).prop_map(|s| s.into_iter().collect())
    }

    fn arb_span() -> impl Strategy<Value = Span> {
        (any::<u32>(), any::<u32>(), any::<u32>(), any::<u32>()).prop_map(
            |(pass, block, start, len)| Span {
                pass,
                block,
                start,
                len,
            },
        )
    }

    fn arb_phase() -> impl Strategy<Value = Phase> {
        (1u8..=4).prop_map(|v| Phase::from_u8(v).unwrap())
    }

    fn arb_body() -> impl Strategy<Value = Body> {
        prop_oneof![
            (
                any::<u32>(),
                any::<u64>(),
                any::<u64>(),
                any::<u64>(),
                ".{0,40}"
            )
                .prop_map(|(version, seed, pulses, blocks, settings)| Body::Hello(
                    Hello {
                        version,
                        seed,
                        pulses,
                        blocks,
                        settings
                    }
                )),
            arb_indices().prop_map(Body::SiftIndices),
            arb_indices().prop_map(Body::SampleRequest),
            arb_bits(200).prop_map(Body::SampleReveal),
            (any::<u64>(), any::<u32>(), any::<u32>()).prop_map(|(seed, pass, block_len)| {
                Body::ShuffleSeed {
                    seed,
                    pass,
                    block_len,
                }
            }),
            proptest::collection::vec(arb_span(), 0..10)
                .prop_map(|s| Body::BlockParity(ParityMsg::Query(s))),
            arb_bits(200).prop_map(|b| Body::BlockParity(ParityMsg::Answer(b))),
            proptest::collection::vec(arb_span(), 0..10)
                .prop_map(|s| Body::Syndrome(SyndromeMsg::Query(s))),
            proptest::collection::vec(arb_bits(20), 0..10)
                .prop_map(|s| Body::Syndrome(SyndromeMsg::Answer(s))),
            (any::<u64>(), any::<u128>())
                .prop_map(|(key_seed, hash)| Body::VerifyHash { key_seed, hash }),
            (any::<u64>(), any::<u64>())
                .prop_map(|(seed, output_len)| Body::PaSeed { seed, output_len }),
            ".{0,60}".prop_map(Body::Abort),
            arb_phase().prop_map(Body::Done),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn every_message_round_trips(sid in any::<u64>(), seq in any::<u64>(), body in arb_body()) {
            let m = Message { session_id: sid, seq, body };
            let frame = encode(&m).unwrap();
            prop_assert_eq!(decode(&frame).unwrap(), m);
        }
    }
}
