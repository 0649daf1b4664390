//! Minimal DNS message codec: enough for TLSA queries with EDNS0 and for
//! the answers a recursive resolver sends back.

use super::KeyDistError;

pub const TYPE_CNAME: u16 = 5;
pub const TYPE_OPT: u16 = 41;
pub const TYPE_TLSA: u16 = 52;
pub const CLASS_IN: u16 = 1;

pub const FLAG_QR: u16 = 0x8000;
pub const FLAG_AA: u16 = 0x0400;
pub const FLAG_TC: u16 = 0x0200;
pub const FLAG_RD: u16 = 0x0100;
pub const FLAG_RA: u16 = 0x0080;
pub const FLAG_AD: u16 = 0x0020;
pub const FLAG_CD: u16 = 0x0010;

pub const RCODE_NOERROR: u8 = 0;
pub const RCODE_FORMERR: u8 = 1;
pub const RCODE_SERVFAIL: u8 = 2;
pub const RCODE_NXDOMAIN: u8 = 3;

/// EDNS0 "DNSSEC OK" bit, in the OPT record's TTL field.
pub const EDNS_DO: u32 = 0x0000_8000;
pub const EDNS_UDP_SIZE: u16 = 1232;

const MAX_NAME_LEN: usize = 255;
const MAX_POINTER_HOPS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Question {
    pub name: String,
    pub qtype: u16,
    pub qclass: u16,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub name: String,
    pub rtype: u16,
    pub class: u16,
    pub ttl: u32,
    pub rdata: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Message {
    pub id: u16,
    pub flags: u16,
    pub questions: Vec<Question>,
    pub answers: Vec<Record>,
    pub authority: Vec<Record>,
    pub additional: Vec<Record>,
}

/// Lowercases and strips the trailing root dot, so names compare equal
/// regardless of how they were written.
pub fn canonical_name(name: &str) -> String {
    name.trim_end_matches('.').to_ascii_lowercase()
}

impl Message {
    /// Recursive query for `name`/`qtype` with EDNS0 and the DO bit set.
    pub fn query(id: u16, name: &str, qtype: u16) -> Self {
        Message {
            id,
            flags: FLAG_RD,
            questions: vec![Question {
                name: canonical_name(name),
                qtype,
                qclass: CLASS_IN,
            }],
            additional: vec![Record {
                name: String::new(),
                rtype: TYPE_OPT,
                class: EDNS_UDP_SIZE,
                ttl: EDNS_DO,
                rdata: Vec::new(),
            }],
            ..Default::default()
        }
    }

    pub fn is_response(&self) -> bool {
        self.flags & FLAG_QR != 0
    }

    pub fn authentic_data(&self) -> bool {
        self.flags & FLAG_AD != 0
    }

    pub fn rcode(&self) -> u8 {
        (self.flags & 0x000f) as u8
    }

    pub fn set_rcode(&mut self, rcode: u8) {
        self.flags = (self.flags & !0x000f) | u16::from(rcode & 0x0f);
    }

    pub fn dnssec_ok(&self) -> bool {
        self.additional
            .iter()
            .any(|r| r.rtype == TYPE_OPT && r.ttl & EDNS_DO != 0)
    }

    pub fn encode(&self) -> Result<Vec<u8>, KeyDistError> {
        let mut out = Vec::with_capacity(512);
        out.extend_from_slice(&self.id.to_be_bytes());
        out.extend_from_slice(&self.flags.to_be_bytes());
        for count in [
            self.questions.len(),
            self.answers.len(),
            self.authority.len(),
            self.additional.len(),
        ] {
            let count = u16::try_from(count).map_err(|_| malformed("section too large"))?;
            out.extend_from_slice(&count.to_be_bytes());
        }
        for q in &self.questions {
            encode_name(&q.name, &mut out)?;
            out.extend_from_slice(&q.qtype.to_be_bytes());
            out.extend_from_slice(&q.qclass.to_be_bytes());
        }
        for r in self.answers.iter().chain(&self.authority).chain(&self.additional) {
            encode_name(&r.name, &mut out)?;
            out.extend_from_slice(&r.rtype.to_be_bytes());
            out.extend_from_slice(&r.class.to_be_bytes());
            out.extend_from_slice(&r.ttl.to_be_bytes());
            let len = u16::try_from(r.rdata.len()).map_err(|_| malformed("rdata too large"))?;
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(&r.rdata);
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self, KeyDistError> {
        let mut pos = 0;
        let id = read_u16(buf, &mut pos)?;
        let flags = read_u16(buf, &mut pos)?;
        let qd = read_u16(buf, &mut pos)?;
        let an = read_u16(buf, &mut pos)?;
        let ns = read_u16(buf, &mut pos)?;
        let ar = read_u16(buf, &mut pos)?;
        let mut questions = Vec::new();
        for _ in 0..qd {
            let name = read_name(buf, &mut pos)?;
            let qtype = read_u16(buf, &mut pos)?;
            let qclass = read_u16(buf, &mut pos)?;
            questions.push(Question { name, qtype, qclass });
        }
        let mut sections = [Vec::new(), Vec::new(), Vec::new()];
        for (section, count) in sections.iter_mut().zip([an, ns, ar]) {
            for _ in 0..count {
                section.push(read_record(buf, &mut pos)?);
            }
        }
        if pos != buf.len() {
            return Err(malformed("trailing bytes"));
        }
        let [answers, authority, additional] = sections;
        Ok(Message {
            id,
            flags,
            questions,
            answers,
            authority,
            additional,
        })
    }
}

fn malformed(reason: &str) -> KeyDistError {
    KeyDistError::MalformedDns(reason.to_string())
}

fn encode_name(name: &str, out: &mut Vec<u8>) -> Result<(), KeyDistError> {
    let name = name.trim_end_matches('.');
    let mut written = 1;
    if !name.is_empty() {
        for label in name.split('.') {
            let bytes = label.as_bytes();
            if bytes.is_empty() || bytes.len() > 63 {
                return Err(malformed("bad label length"));
            }
            written += bytes.len() + 1;
            out.push(bytes.len() as u8);
            out.extend_from_slice(bytes);
        }
    }
    if written > MAX_NAME_LEN {
        return Err(malformed("name too long"));
    }
    out.push(0);
    Ok(())
}

fn read_u16(buf: &[u8], pos: &mut usize) -> Result<u16, KeyDistError> {
    let bytes = buf.get(*pos..*pos + 2).ok_or_else(|| malformed("truncated"))?;
    *pos += 2;
    Ok(u16::from_be_bytes([bytes[0], bytes[1]]))
}

fn read_u32(buf: &[u8], pos: &mut usize) -> Result<u32, KeyDistError> {
    let bytes = buf.get(*pos..*pos + 4).ok_or_else(|| malformed("truncated"))?;
    *pos += 4;
    Ok(u32::from_be_bytes(bytes.try_into().expect("4 bytes")))
}

/// Reads a possibly compressed name. Pointers must go strictly backwards,
/// which together with the hop limit rules out loops.
fn read_name(buf: &[u8], pos: &mut usize) -> Result<String, KeyDistError> {
    let mut labels: Vec<String> = Vec::new();
    let mut cursor = *pos;
    let mut resume = None;
    let mut hops = 0;
    let mut total = 1;
    loop {
        let len = *buf.get(cursor).ok_or_else(|| malformed("truncated name"))?;
        match len & 0xc0 {
            0x00 => {
                if len == 0 {
                    cursor += 1;
                    break;
                }
                let start = cursor + 1;
                let end = start + len as usize;
                let label = buf.get(start..end).ok_or_else(|| malformed("truncated label"))?;
                total += label.len() + 1;
                if total > MAX_NAME_LEN {
                    return Err(malformed("name too long"));
                }
                labels.push(String::from_utf8_lossy(label).into_owned());
                cursor = end;
            }
            0xc0 => {
                let low = *buf.get(cursor + 1).ok_or_else(|| malformed("truncated pointer"))?;
                let target = (usize::from(len & 0x3f) << 8) | usize::from(low);
                if target >= cursor {
                    return Err(malformed("forward compression pointer"));
                }
                hops += 1;
                if hops > MAX_POINTER_HOPS {
                    return Err(malformed("too many compression pointers"));
                }
                resume.get_or_insert(cursor + 2);
                cursor = target;
            }
            _ => return Err(malformed("reserved label type")),
        }
    }
    *pos = resume.unwrap_or(cursor);
    Ok(labels.join("."))
}

fn read_record(buf: &[u8], pos: &mut usize) -> Result<Record, KeyDistError> {
    let name = read_name(buf, pos)?;
    let rtype = read_u16(buf, pos)?;
    let class = read_u16(buf, pos)?;
    let ttl = read_u32(buf, pos)?;
    let len = read_u16(buf, pos)? as usize;
    let rdata = buf
        .get(*pos..*pos + len)
        .ok_or_else(|| malformed("truncated rdata"))?
        .to_vec();
    *pos += len;
    Ok(Record {
        name,
        rtype,
        class,
        ttl,
        rdata,
    })
}
