//! Baseline sequential JFIF emission and parsing with Huffman entropy
//! coding. Only what the codec produces is supported: 8-bit precision,
//! three components, 4:4:4 or 4:2:0 sampling, no restart intervals.

use super::codec::{Block, CodecConfig, CompressedImage, Plane, Subsampling};
use super::tables::{quality_to_tables, QuantTable, QuantTableSet, ZIGZAG};
use crate::error::{Error, Result};

const DC_LUMA_BITS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
const DC_CHROMA_BITS: [u8; 16] = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
const DC_VALUES: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];
const AC_LUMA_BITS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d];
const AC_CHROMA_BITS: [u8; 16] = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77];

#[rustfmt::skip]
const AC_LUMA_VALUES: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
    0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5,
    0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

#[rustfmt::skip]
const AC_CHROMA_VALUES: [u8; 162] = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0,
    0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
    0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5,
    0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3,
    0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
    0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

const SOI: u8 = 0xd8;
const EOI: u8 = 0xd9;
const SOF0: u8 = 0xc0;
const DHT: u8 = 0xc4;
const DQT: u8 = 0xdb;
const DRI: u8 = 0xdd;
const SOS: u8 = 0xda;
const APP0: u8 = 0xe0;

/// Canonical code table: `codes[symbol] = (code, length)`.
struct HuffEncoder {
    codes: [(u16, u8); 256],
}

impl HuffEncoder {
    fn new(bits: &[u8; 16], values: &[u8]) -> Self {
        let mut codes = [(0u16, 0u8); 256];
        let mut code = 0u16;
        let mut k = 0;
        for (len, &count) in bits.iter().enumerate() {
            for _ in 0..count {
                codes[values[k] as usize] = (code, len as u8 + 1);
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        Self { codes }
    }
}

struct HuffDecoder {
    /// Per code length (1..=16): smallest code, largest code (-1 when none),
    /// index of the first value with that length.
    mincode: [i32; 17],
    maxcode: [i32; 17],
    valptr: [usize; 17],
    values: Vec<u8>,
}

impl HuffDecoder {
    fn new(bits: &[u8; 16], values: Vec<u8>) -> Result<Self> {
        let total: usize = bits.iter().map(|&b| b as usize).sum();
        if total != values.len() || total > 256 {
            return Err(Error::decode("huffman table value count mismatch"));
        }
        let mut mincode = [0; 17];
        let mut maxcode = [-1; 17];
        let mut valptr = [0; 17];
        let mut code = 0i32;
        let mut k = 0usize;
        for len in 1..=16 {
            let n = bits[len - 1] as usize;
            if n > 0 {
                valptr[len] = k;
                mincode[len] = code;
                code += n as i32;
                k += n;
                maxcode[len] = code - 1;
            }
            code <<= 1;
        }
        Ok(Self { mincode, maxcode, valptr, values })
    }

    fn decode(&self, r: &mut BitReader<'_>) -> Result<u8> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | r.bit()? as i32;
            if code <= self.maxcode[len] {
                let idx = self.valptr[len] + (code - self.mincode[len]) as usize;
                return Ok(self.values[idx]);
            }
        }
        Err(Error::decode("invalid huffman code"))
    }
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn new(out: Vec<u8>) -> Self {
        Self { out, acc: 0, nbits: 0 }
    }

    fn put(&mut self, code: u16, len: u8) {
        for i in (0..len).rev() {
            self.acc = (self.acc << 1) | u32::from((code >> i) & 1);
            self.nbits += 1;
            if self.nbits == 8 {
                let byte = self.acc as u8;
                self.out.push(byte);
                if byte == 0xff {
                    self.out.push(0);
                }
                self.acc = 0;
                self.nbits = 0;
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        while self.nbits != 0 {
            self.put(1, 1);
        }
        self.out
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u8,
    left: u8,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0, acc: 0, left: 0 }
    }

    fn bit(&mut self) -> Result<u8> {
        if self.left == 0 {
            let b = *self
                .data
                .get(self.pos)
                .ok_or_else(|| Error::decode("entropy-coded data truncated"))?;
            self.pos += 1;
            if b == 0xff {
                match self.data.get(self.pos) {
                    Some(0) => self.pos += 1,
                    _ => return Err(Error::decode("unexpected marker inside scan")),
                }
            }
            self.acc = b;
            self.left = 8;
        }
        self.left -= 1;
        Ok((self.acc >> self.left) & 1)
    }

    fn bits(&mut self, n: u8) -> Result<u16> {
        let mut v = 0u16;
        for _ in 0..n {
            v = (v << 1) | u16::from(self.bit()?);
        }
        Ok(v)
    }

    /// Offset of the first byte not consumed by the scan.
    fn consumed(&self) -> usize {
        self.pos
    }
}

fn category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

fn put_value(w: &mut BitWriter, v: i32, cat: u8) {
    if cat == 0 {
        return;
    }
    let bits = if v < 0 { v - 1 } else { v };
    w.put((bits as u32 & ((1 << cat) - 1)) as u16, cat);
}

fn extend(v: u16, cat: u8) -> i32 {
    if cat == 0 {
        return 0;
    }
    let v = i32::from(v);
    if v < (1 << (cat - 1)) {
        v - (1 << cat) + 1
    } else {
        v
    }
}

fn encode_block(w: &mut BitWriter, blk: &Block, pred: &mut i32, dc: &HuffEncoder, ac: &HuffEncoder) {
    let diff = i32::from(blk[0]) - *pred;
    *pred = i32::from(blk[0]);
    let cat = category(diff);
    let (c, l) = dc.codes[cat as usize];
    w.put(c, l);
    put_value(w, diff, cat);

    let mut run = 0u8;
    for &nat in &ZIGZAG[1..] {
        let v = i32::from(blk[nat]);
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            let (c, l) = ac.codes[0xf0];
            w.put(c, l);
            run -= 16;
        }
        let cat = category(v);
        let (c, l) = ac.codes[((run << 4) | cat) as usize];
        w.put(c, l);
        put_value(w, v, cat);
        run = 0;
    }
    if run > 0 {
        let (c, l) = ac.codes[0x00];
        w.put(c, l);
    }
}

fn decode_block(
    r: &mut BitReader<'_>,
    pred: &mut i32,
    dc: &HuffDecoder,
    ac: &HuffDecoder,
) -> Result<Block> {
    let mut blk = [0i16; 64];
    let cat = dc.decode(r)?;
    if cat > 11 {
        return Err(Error::decode("DC category out of range"));
    }
    *pred += extend(r.bits(cat)?, cat);
    blk[0] = i16::try_from(*pred).map_err(|_| Error::decode("DC value overflow"))?;
    let mut k = 1;
    while k < 64 {
        let rs = ac.decode(r)?;
        let (run, cat) = (rs >> 4, rs & 0x0f);
        if cat == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            break;
        }
        k += run as usize;
        if k >= 64 {
            return Err(Error::decode("AC run past end of block"));
        }
        blk[ZIGZAG[k]] = extend(r.bits(cat)?, cat) as i16;
        k += 1;
    }
    Ok(blk)
}

fn segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xff, marker]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn dht_payload(class_id: u8, bits: &[u8; 16], values: &[u8]) -> Vec<u8> {
    let mut p = vec![class_id];
    p.extend_from_slice(bits);
    p.extend_from_slice(values);
    p
}

fn sampling(s: Subsampling) -> (usize, usize) {
    match s {
        Subsampling::S444 => (1, 1),
        Subsampling::S420 => (2, 2),
    }
}

/// Serializes the quantized planes as a baseline JFIF file using the
/// standard Annex K Huffman tables.
pub fn emit_jfif(c: &CompressedImage) -> Result<Vec<u8>> {
    if c.planes.len() != 3 {
        return Err(Error::invalid("JFIF emission needs exactly 3 planes"));
    }
    if c.width > 0xffff || c.height > 0xffff {
        return Err(Error::invalid("image too large for JFIF"));
    }
    let mut out = vec![0xff, SOI];
    segment(&mut out, APP0, b"JFIF\0\x01\x01\x00\x00\x01\x00\x01\x00\x00");
    for (id, table) in [(0u8, &c.tables.luma), (1u8, &c.tables.chroma)] {
        let mut p = vec![id];
        p.extend(ZIGZAG.iter().map(|&n| table.0[n] as u8));
        segment(&mut out, DQT, &p);
    }
    let (h, v) = sampling(c.config.subsampling);
    let mut sof = vec![8];
    sof.extend_from_slice(&(c.height as u16).to_be_bytes());
    sof.extend_from_slice(&(c.width as u16).to_be_bytes());
    sof.push(3);
    sof.extend_from_slice(&[1, ((h << 4) | v) as u8, 0, 2, 0x11, 1, 3, 0x11, 1]);
    segment(&mut out, SOF0, &sof);
    segment(&mut out, DHT, &dht_payload(0x00, &DC_LUMA_BITS, &DC_VALUES));
    segment(&mut out, DHT, &dht_payload(0x10, &AC_LUMA_BITS, &AC_LUMA_VALUES));
    segment(&mut out, DHT, &dht_payload(0x01, &DC_CHROMA_BITS, &DC_VALUES));
    segment(&mut out, DHT, &dht_payload(0x11, &AC_CHROMA_BITS, &AC_CHROMA_VALUES));
    segment(&mut out, SOS, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);

    let dc = [HuffEncoder::new(&DC_LUMA_BITS, &DC_VALUES), HuffEncoder::new(&DC_CHROMA_BITS, &DC_VALUES)];
    let ac = [
        HuffEncoder::new(&AC_LUMA_BITS, &AC_LUMA_VALUES),
        HuffEncoder::new(&AC_CHROMA_BITS, &AC_CHROMA_VALUES),
    ];
    let mcus_x = c.width.div_ceil(8 * h);
    let mcus_y = c.height.div_ceil(8 * v);
    let mut preds = [0i32; 3];
    let mut w = BitWriter::new(out);
    for my in 0..mcus_y {
        for mx in 0..mcus_x {
            for (ci, plane) in c.planes.iter().enumerate() {
                let (ch, cv) = if ci == 0 { (h, v) } else { (1, 1) };
                let t = usize::from(ci != 0);
                for by in 0..cv {
                    for bx in 0..ch {
                        let (gx, gy) = (mx * ch + bx, my * cv + by);
                        if gx < plane.blocks_w && gy < plane.blocks_h {
                            encode_block(&mut w, plane.block(gx, gy), &mut preds[ci], &dc[t], &ac[t]);
                        } else {
                            // MCU padding: flat block at the running DC.
                            let mut pad = [0i16; 64];
                            pad[0] = preds[ci] as i16;
                            encode_block(&mut w, &pad, &mut preds[ci], &dc[t], &ac[t]);
                        }
                    }
                }
            }
        }
    }
    let mut out = w.finish();
    out.extend_from_slice(&[0xff, EOI]);
    Ok(out)
}

struct Component {
    id: u8,
    h: usize,
    v: usize,
    tq: usize,
    td: usize,
    ta: usize,
}

fn read_u16(data: &[u8], at: usize) -> Result<u16> {
    data.get(at..at + 2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .ok_or_else(|| Error::decode("unexpected end of file"))
}

fn infer_quality(tables: &QuantTableSet) -> u8 {
    let dist = |q: u8| {
        let t = quality_to_tables(q).expect("quality in range");
        t.luma.0.iter().zip(&tables.luma.0).chain(t.chroma.0.iter().zip(&tables.chroma.0))
            .map(|(&a, &b)| u32::from(a.abs_diff(b)))
            .sum::<u32>()
    };
    (1..=100u8).min_by_key(|&q| dist(q)).unwrap_or(50)
}

/// Parses a baseline JFIF file produced by [`emit_jfif`] (or any encoder
/// staying within the supported subset) back into quantized planes.
///
/// The quality factor is not stored in JFIF; it is recovered as the IJG
/// quality whose tables are closest to the file's tables.
pub fn parse_jfif(data: &[u8]) -> Result<CompressedImage> {
    if data.len() < 4 || data[0] != 0xff || data[1] != SOI {
        return Err(Error::decode("missing SOI marker"));
    }
    let mut pos = 2;
    let mut qt: [Option<QuantTable>; 4] = [None; 4];
    let mut dc_tables: [Option<HuffDecoder>; 4] = [None, None, None, None];
    let mut ac_tables: [Option<HuffDecoder>; 4] = [None, None, None, None];
    let mut frame: Option<(usize, usize, Vec<Component>)> = None;
    let mut result: Option<CompressedImage> = None;

    loop {
        while data.get(pos) == Some(&0xff) && data.get(pos + 1) == Some(&0xff) {
            pos += 1;
        }
        if data.get(pos) != Some(&0xff) {
            return Err(Error::decode(format!("expected marker at offset {pos}")));
        }
        let marker = *data.get(pos + 1).ok_or_else(|| Error::decode("truncated marker"))?;
        pos += 2;
        if marker == EOI {
            break;
        }
        let len = read_u16(data, pos)? as usize;
        if len < 2 || pos + len > data.len() {
            return Err(Error::decode("segment length out of bounds"));
        }
        let seg = &data[pos + 2..pos + len];
        match marker {
            DQT => {
                let mut s = seg;
                while !s.is_empty() {
                    let (pq, tq) = (s[0] >> 4, (s[0] & 0x0f) as usize);
                    if pq != 0 || tq > 3 || s.len() < 65 {
                        return Err(Error::decode("unsupported or malformed DQT"));
                    }
                    let mut t = [0u16; 64];
                    for (k, &nat) in ZIGZAG.iter().enumerate() {
                        t[nat] = u16::from(s[1 + k]);
                    }
                    qt[tq] = Some(QuantTable::new(t).map_err(|_| Error::decode("zero quantizer"))?);
                    s = &s[65..];
                }
            }
            DHT => {
                let mut s = seg;
                while !s.is_empty() {
                    if s.len() < 17 {
                        return Err(Error::decode("malformed DHT"));
                    }
                    let (class, id) = (s[0] >> 4, (s[0] & 0x0f) as usize);
                    let mut bits = [0u8; 16];
                    bits.copy_from_slice(&s[1..17]);
                    let n: usize = bits.iter().map(|&b| b as usize).sum();
                    if class > 1 || id > 3 || s.len() < 17 + n {
                        return Err(Error::decode("malformed DHT"));
                    }
                    let dec = HuffDecoder::new(&bits, s[17..17 + n].to_vec())?;
                    if class == 0 {
                        dc_tables[id] = Some(dec);
                    } else {
                        ac_tables[id] = Some(dec);
                    }
                    s = &s[17 + n..];
                }
            }
            SOF0 => {
                if seg.len() < 6 || seg[0] != 8 {
                    return Err(Error::decode("only 8-bit baseline frames are supported"));
                }
                let height = read_u16(seg, 1)? as usize;
                let width = read_u16(seg, 3)? as usize;
                let n = seg[5] as usize;
                if n != 3 || seg.len() < 6 + 3 * n || width == 0 || height == 0 {
                    return Err(Error::decode("expected a 3-component frame"));
                }
                let comps = (0..n)
                    .map(|i| {
                        let b = &seg[6 + 3 * i..9 + 3 * i];
                        Component {
                            id: b[0],
                            h: (b[1] >> 4) as usize,
                            v: (b[1] & 0x0f) as usize,
                            tq: (b[2] & 0x03) as usize,
                            td: 0,
                            ta: 0,
                        }
                    })
                    .collect();
                frame = Some((width, height, comps));
            }
            DRI => {
                if read_u16(seg, 0)? != 0 {
                    return Err(Error::decode("restart intervals are not supported"));
                }
            }
            SOS => {
                let (width, height, comps) =
                    frame.as_mut().ok_or_else(|| Error::decode("SOS before SOF"))?;
                let ns = *seg.first().ok_or_else(|| Error::decode("malformed SOS"))? as usize;
                if ns != 3 || seg.len() < 1 + 2 * ns + 3 {
                    return Err(Error::decode("only single interleaved scans are supported"));
                }
                for i in 0..ns {
                    let (cid, t) = (seg[1 + 2 * i], seg[2 + 2 * i]);
                    let c = comps
                        .iter_mut()
                        .find(|c| c.id == cid)
                        .ok_or_else(|| Error::decode("scan references unknown component"))?;
                    c.td = (t >> 4) as usize & 3;
                    c.ta = (t & 0x0f) as usize & 3;
                }
                let subsampling = match comps.iter().map(|c| (c.h, c.v)).collect::<Vec<_>>()[..] {
                    [(1, 1), (1, 1), (1, 1)] => Subsampling::S444,
                    [(2, 2), (1, 1), (1, 1)] => Subsampling::S420,
                    _ => return Err(Error::decode("unsupported sampling factors")),
                };
                let tables = QuantTableSet {
                    luma: qt[comps[0].tq].ok_or_else(|| Error::decode("missing luma DQT"))?,
                    chroma: qt[comps[1].tq].ok_or_else(|| Error::decode("missing chroma DQT"))?,
                };
                let (w, h) = (*width, *height);
                let (cw, ch) = CompressedImage::chroma_dims(w, h, subsampling);
                let (hmax, vmax) = sampling(subsampling);
                let mcus_x = w.div_ceil(8 * hmax);
                let mcus_y = h.div_ceil(8 * vmax);
                let mut planes = vec![Plane::zeroed(w, h), Plane::zeroed(cw, ch), Plane::zeroed(cw, ch)];
                let mut preds = [0i32; 3];
                let scan = &data[pos + len..];
                let mut r = BitReader::new(scan);
                for my in 0..mcus_y {
                    for mx in 0..mcus_x {
                        for (ci, comp) in comps.iter().enumerate() {
                            let dc = dc_tables[comp.td]
                                .as_ref()
                                .ok_or_else(|| Error::decode("missing DC table"))?;
                            let ac = ac_tables[comp.ta]
                                .as_ref()
                                .ok_or_else(|| Error::decode("missing AC table"))?;
                            for by in 0..comp.v {
                                for bx in 0..comp.h {
                                    let blk = decode_block(&mut r, &mut preds[ci], dc, ac)?;
                                    let (gx, gy) = (mx * comp.h + bx, my * comp.v + by);
                                    let p = &mut planes[ci];
                                    if gx < p.blocks_w && gy < p.blocks_h {
                                        p.blocks[gy * p.blocks_w + gx] = blk;
                                    }
                                }
                            }
                        }
                    }
                }
                let quality = infer_quality(&tables);
                result = Some(CompressedImage {
                    config: CodecConfig { quality, subsampling, entropy_coding: true },
                    width: w,
                    height: h,
                    tables,
                    planes,
                    bitstream: Some(data.to_vec()),
                });
                pos = pos + len + r.consumed();
                continue;
            }
            _ => {}
        }
        pos += len;
    }
    result.ok_or_else(|| Error::decode("no scan found"))
}
