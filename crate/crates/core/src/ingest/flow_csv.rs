//! Column-mapped CSV flow parser covering CICIDS2017/DAPT2020-style exports,
//! plus a generic serializer whose output parses back losslessly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::{parse_tcp_flags, FlowRecord, IngestError, ParseDiagnostics, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DurationUnit {
    #[serde(rename = "s")]
    #[default]
    Seconds,
    #[serde(rename = "ms")]
    Millis,
    #[serde(rename = "us")]
    Micros,
}

impl DurationUnit {
    fn to_seconds(self, v: f64) -> f64 {
        match self {
            DurationUnit::Seconds => v,
            DurationUnit::Millis => v / 1e3,
            DurationUnit::Micros => v / 1e6,
        }
    }
}

/// Maps CSV column names onto [`FlowRecord`] fields. Any column not covered
/// here whose name starts with `app.` is carried into `app_fields`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub ts: String,
    pub src_ip: String,
    pub src_port: String,
    pub dst_ip: String,
    pub dst_port: String,
    pub transport: String,
    pub app_service: Option<String>,
    pub duration: Option<String>,
    pub fwd_packets: Option<String>,
    pub bwd_packets: Option<String>,
    pub fwd_bytes: Option<String>,
    pub bwd_bytes: Option<String>,
    pub tcp_flags: Option<String>,
    pub label: Option<String>,
    /// strftime pattern for non-epoch timestamp columns (assumed UTC).
    pub ts_format: Option<String>,
    pub duration_unit: DurationUnit,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        generic_mapping()
    }
}

/// The mapping for the crate's own generic CSV layout.
pub fn generic_mapping() -> ColumnMapping {
    ColumnMapping {
        ts: "ts".into(),
        src_ip: "src_ip".into(),
        src_port: "src_port".into(),
        dst_ip: "dst_ip".into(),
        dst_port: "dst_port".into(),
        transport: "transport".into(),
        app_service: Some("app_service".into()),
        duration: Some("duration".into()),
        fwd_packets: Some("fwd_packets".into()),
        bwd_packets: Some("bwd_packets".into()),
        fwd_bytes: Some("fwd_bytes".into()),
        bwd_bytes: Some("bwd_bytes".into()),
        tcp_flags: Some("tcp_flags".into()),
        label: Some("label".into()),
        ts_format: None,
        duration_unit: DurationUnit::Seconds,
    }
}

struct Columns {
    ts: usize,
    src_ip: usize,
    src_port: usize,
    dst_ip: usize,
    dst_port: usize,
    transport: usize,
    app_service: Option<usize>,
    duration: Option<usize>,
    fwd_packets: Option<usize>,
    bwd_packets: Option<usize>,
    fwd_bytes: Option<usize>,
    bwd_bytes: Option<usize>,
    tcp_flags: Option<usize>,
    label: Option<usize>,
    app: Vec<(usize, String)>,
}

/// Streaming CSV reader producing [`FlowRecord`]s per the configured mapping.
pub struct FlowCsvParser<R: Read> {
    reader: csv::Reader<R>,
    columns: Columns,
    mapping: ColumnMapping,
    line_no: u64,
    diag: ParseDiagnostics,
    row: csv::StringRecord,
}

impl<R: Read> FlowCsvParser<R> {
    pub fn new(reader: R, mapping: ColumnMapping) -> Result<Self, IngestError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let headers: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let require =
            |name: &str| find(name).ok_or_else(|| IngestError::SchemaMismatch(name.to_string()));
        let opt = |name: &Option<String>| -> Result<Option<usize>, IngestError> {
            match name {
                Some(n) => require(n).map(Some),
                None => Ok(None),
            }
        };
        let columns = Columns {
            ts: require(&mapping.ts)?,
            src_ip: require(&mapping.src_ip)?,
            src_port: require(&mapping.src_port)?,
            dst_ip: require(&mapping.dst_ip)?,
            dst_port: require(&mapping.dst_port)?,
            transport: require(&mapping.transport)?,
            app_service: opt(&mapping.app_service)?,
            duration: opt(&mapping.duration)?,
            fwd_packets: opt(&mapping.fwd_packets)?,
            bwd_packets: opt(&mapping.bwd_packets)?,
            fwd_bytes: opt(&mapping.fwd_bytes)?,
            bwd_bytes: opt(&mapping.bwd_bytes)?,
            tcp_flags: opt(&mapping.tcp_flags)?,
            label: opt(&mapping.label)?,
            app: headers
                .iter()
                .enumerate()
                .filter_map(|(i, h)| h.strip_prefix("app.").map(|name| (i, name.to_string())))
                .collect(),
        };
        Ok(Self {
            reader,
            columns,
            mapping,
            line_no: 1,
            diag: ParseDiagnostics::default(),
            row: csv::StringRecord::new(),
        })
    }

    pub fn diagnostics(&self) -> &ParseDiagnostics {
        &self.diag
    }

    fn parse_row(&mut self) -> Option<FlowRecord> {
        let line_no = self.line_no;
        let c = &self.columns;
        let row = &self.row;
        let mapping = &self.mapping;
        let diag = &mut self.diag;
        let get = |idx: usize| -> &str { row.get(idx).unwrap_or("").trim() };
        let opt_get = |idx: Option<usize>| -> &str { idx.map(get).unwrap_or("") };
        let parse_ts = |v: &str| -> Option<f64> {
            if let Some(fmt) = &mapping.ts_format {
                let dt = chrono::NaiveDateTime::parse_from_str(v, fmt).ok()?;
                return Some(dt.and_utc().timestamp_micros() as f64 / 1e6);
            }
            v.parse::<f64>().ok()
        };

        macro_rules! skip {
            ($msg:expr) => {{
                let msg = $msg;
                diag.warn(line_no, msg, true);
                return None;
            }};
        }

        let ts = match parse_ts(get(c.ts)) {
            Some(ts) => ts,
            None => skip!(format!("bad ts {:?}", get(c.ts))),
        };
        let src_ip: IpAddr = match get(c.src_ip).parse() {
            Ok(ip) => ip,
            Err(_) => skip!(format!("bad src ip {:?}", get(c.src_ip))),
        };
        let dst_ip: IpAddr = match get(c.dst_ip).parse() {
            Ok(ip) => ip,
            Err(_) => skip!(format!("bad dst ip {:?}", get(c.dst_ip))),
        };
        let parse_port = |v: &str| -> Option<u16> {
            if v.is_empty() {
                Some(0)
            } else {
                v.parse::<u16>().ok()
            }
        };
        let src_port = match parse_port(get(c.src_port)) {
            Some(p) => p,
            None => skip!(format!("bad src port {:?}", get(c.src_port))),
        };
        let dst_port = match parse_port(get(c.dst_port)) {
            Some(p) => p,
            None => skip!(format!("bad dst port {:?}", get(c.dst_port))),
        };
        let transport = Transport::parse(get(c.transport));
        let duration_s = {
            let v = opt_get(c.duration);
            if v.is_empty() {
                0.0
            } else {
                match v.parse::<f64>() {
                    Ok(d) if d >= 0.0 => mapping.duration_unit.to_seconds(d),
                    _ => skip!(format!("bad duration {v:?}")),
                }
            }
        };
        let parse_count = |v: &str| -> Option<u64> {
            if v.is_empty() {
                Some(0)
            } else {
                v.parse::<u64>().ok()
            }
        };
        macro_rules! count_field {
            ($idx:expr, $name:literal) => {
                match parse_count(opt_get($idx)) {
                    Some(v) => v,
                    None => skip!(format!("bad {} {:?}", $name, opt_get($idx))),
                }
            };
        }
        let fwd_packets = count_field!(c.fwd_packets, "fwd packets");
        let bwd_packets = count_field!(c.bwd_packets, "bwd packets");
        let fwd_bytes = count_field!(c.fwd_bytes, "fwd bytes");
        let bwd_bytes = count_field!(c.bwd_bytes, "bwd bytes");

        let tcp_flags = if transport == Transport::Tcp {
            match parse_tcp_flags(opt_get(c.tcp_flags)) {
                Some(flags) => flags,
                None => skip!(format!("bad tcp flags {:?}", opt_get(c.tcp_flags))),
            }
        } else {
            BTreeMap::new()
        };

        let mut app_fields = BTreeMap::new();
        for (idx, name) in &c.app {
            let v = get(*idx);
            if !v.is_empty() {
                app_fields.insert(name.clone(), v.to_string());
            }
        }
        let label = {
            let v = opt_get(c.label);
            if v.is_empty() {
                None
            } else {
                Some(v.to_string())
            }
        };

        diag.record();
        Some(FlowRecord {
            ts,
            src_ip,
            src_port,
            dst_ip,
            dst_port: if transport == Transport::Icmp {
                0
            } else {
                dst_port
            },
            transport,
            app_service: {
                let v = opt_get(c.app_service);
                if v.is_empty() {
                    None
                } else {
                    Some(v.to_string())
                }
            },
            duration_s,
            fwd_packets,
            bwd_packets,
            fwd_bytes,
            bwd_bytes,
            tcp_flags,
            app_fields,
            label,
        })
    }
}

impl<R: Read> Iterator for FlowCsvParser<R> {
    type Item = Result<FlowRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let mut row = std::mem::take(&mut self.row);
            let read = self.reader.read_record(&mut row);
            self.row = row;
            match read {
                Ok(false) => return None,
                Ok(true) => {}
                Err(e) => {
                    self.line_no += 1;
                    self.diag.warn(self.line_no, format!("csv: {e}"), true);
                    continue;
                }
            }
            self.line_no += 1;
            if let Some(record) = self.parse_row() {
                return Some(Ok(record));
            }
        }
    }
}

/// Writes records in the generic CSV layout. App-layer fields become `app.*`
/// columns (union over all records, sorted); parsing the output with
/// [`generic_mapping`] reproduces the records exactly.
pub fn write_generic_csv<W: Write>(records: &[FlowRecord], mut w: W) -> std::io::Result<()> {
    let mut app_columns: Vec<String> = records
        .iter()
        .flat_map(|r| r.app_fields.keys().cloned())
        .collect();
    app_columns.sort();
    app_columns.dedup();

    let mut header: Vec<String> = [
        "ts",
        "src_ip",
        "src_port",
        "dst_ip",
        "dst_port",
        "transport",
        "app_service",
        "duration",
        "fwd_packets",
        "bwd_packets",
        "fwd_bytes",
        "bwd_bytes",
        "tcp_flags",
        "label",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(app_columns.iter().map(|c| format!("app.{c}")));

    let mut writer = csv::Writer::from_writer(&mut w);
    writer
        .write_record(&header)
        .map_err(std::io::Error::other)?;
    for r in records {
        let mut row: Vec<String> = vec![
            format!("{}", r.ts),
            r.src_ip.to_string(),
            r.src_port.to_string(),
            r.dst_ip.to_string(),
            r.dst_port.to_string(),
            r.transport.to_string(),
            r.app_service.clone().unwrap_or_default(),
            format!("{}", r.duration_s),
            r.fwd_packets.to_string(),
            r.bwd_packets.to_string(),
            r.fwd_bytes.to_string(),
            r.bwd_bytes.to_string(),
            r.tcp_flags_string(),
            r.label.clone().unwrap_or_default(),
        ];
        for col in &app_columns {
            row.push(r.app_fields.get(col).cloned().unwrap_or_default());
        }
        writer.write_record(&row).map_err(std::io::Error::other)?;
    }
    writer.flush()?;
    Ok(())
}
