//! Closed-form storage, transmission and computation overhead.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Nominal certificate size in the packet-size model.
pub const MODEL_CERTIFICATE_BYTES: f64 = 100.0;
/// Nominal beacon size.
pub const MODEL_BEACON_BYTES: f64 = 100.0;
pub const HASH_BYTES: f64 = 32.0;
/// One absence-proof level: a hash plus an 8-byte timestamp.
pub const ABSENCE_LEVEL_BYTES: f64 = 40.0;
pub const HEADER_BYTES: u64 = 80;
/// One block every ten minutes.
pub const BLOCKS_PER_HOUR: u64 = 6;
/// Cost of one hash evaluation, in milliseconds.
pub const T1_MS: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum OverheadError {
    #[error("n and m must be at least 1 (got n={n}, m={m})")]
    EmptySet { n: u64, m: u64 },
    #[error("need i >= j >= 0 (got i={i}, j={j})")]
    Rates { i: f64, j: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverheadReport {
    /// Issued certificates.
    pub n: u64,
    /// Revoked keys.
    pub m: u64,
    /// Packets received per second.
    pub i: f64,
    /// Packets per second that carry a new key (and so a full auth packet).
    pub j: f64,
    pub packet_bytes: f64,
    pub tran_bytes_per_s: f64,
    pub tran_mbit_per_s: f64,
    pub tran_mbyte_per_s: f64,
    /// Header storage of one chain over a year of ten-minute blocks.
    pub header_bytes_per_year: u64,
    pub auth_time_ms: f64,
}

pub fn header_bytes_per_year() -> u64 {
    HEADER_BYTES * BLOCKS_PER_HOUR * 24 * 365
}

pub fn packet_bytes(n: u64, m: u64) -> f64 {
    MODEL_CERTIFICATE_BYTES + HASH_BYTES * (n as f64).log2() + ABSENCE_LEVEL_BYTES * (m as f64).log2()
}

pub fn auth_time_ms(n: u64, m: u64) -> f64 {
    T1_MS * ((n as f64).log2() + (m as f64).log2())
}

pub fn calc_overhead(n: u64, m: u64, i: f64, j: f64) -> Result<OverheadReport, OverheadError> {
    if n == 0 || m == 0 {
        return Err(OverheadError::EmptySet { n, m });
    }
    if !(j >= 0.0 && i >= j && i.is_finite()) {
        return Err(OverheadError::Rates { i, j });
    }
    let s = packet_bytes(n, m);
    let tran = MODEL_BEACON_BYTES * (i - j) + s * j;
    Ok(OverheadReport {
        n,
        m,
        i,
        j,
        packet_bytes: s,
        tran_bytes_per_s: tran,
        tran_mbit_per_s: tran * 8.0 / 1e6,
        tran_mbyte_per_s: tran / 1e6,
        header_bytes_per_year: header_bytes_per_year(),
        auth_time_ms: auth_time_ms(n, m),
    })
}

impl fmt::Display for OverheadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}, m = {}, i = {}/s, j = {}/s", self.n, self.m, self.i, self.j)?;
        writeln!(f, "packet size          {:.1} bytes", self.packet_bytes)?;
        writeln!(
            f,
            "transmission         {:.1} bytes/s = {:.4} Mbit/s = {:.4} MB/s",
            self.tran_bytes_per_s, self.tran_mbit_per_s, self.tran_mbyte_per_s
        )?;
        writeln!(
            f,
            "header storage       {} bytes/year ({:.1} MB)",
            self.header_bytes_per_year,
            self.header_bytes_per_year as f64 / 1e6
        )?;
        write!(f, "authentication time  {:.4} ms", self.auth_time_ms)
    }
}
