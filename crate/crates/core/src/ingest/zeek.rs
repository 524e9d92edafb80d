//! Streaming parser for Zeek conn.log TSV, including the labeled variant
//! where `label`/`detailed-label` columns were appended to the conn schema.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::net::IpAddr;

use super::{FlowRecord, IngestError, ParseDiagnostics, TcpFlag, Transport};

/// Zeek's unset/empty field markers.
fn is_unset(v: &str) -> bool {
    v.is_empty() || v == "-" || v == "(empty)"
}

#[derive(Debug, Default)]
struct Columns {
    ts: usize,
    orig_h: usize,
    orig_p: usize,
    resp_h: usize,
    resp_p: usize,
    proto: usize,
    service: Option<usize>,
    duration: Option<usize>,
    orig_bytes: Option<usize>,
    resp_bytes: Option<usize>,
    orig_pkts: Option<usize>,
    resp_pkts: Option<usize>,
    history: Option<usize>,
    conn_state: Option<usize>,
    label: Option<usize>,
    detailed_label: Option<usize>,
    count: usize,
}

impl Columns {
    fn from_header(fields: &[&str]) -> Result<Self, IngestError> {
        let find = |name: &str| fields.iter().position(|f| *f == name);
        let require =
            |name: &str| find(name).ok_or_else(|| IngestError::SchemaMismatch(name.to_string()));
        Ok(Columns {
            ts: require("ts")?,
            orig_h: require("id.orig_h")?,
            orig_p: require("id.orig_p")?,
            resp_h: require("id.resp_h")?,
            resp_p: require("id.resp_p")?,
            proto: require("proto")?,
            service: find("service"),
            duration: find("duration"),
            orig_bytes: find("orig_bytes"),
            resp_bytes: find("resp_bytes"),
            orig_pkts: find("orig_pkts"),
            resp_pkts: find("resp_pkts"),
            history: find("history"),
            conn_state: find("conn_state"),
            label: find("label"),
            detailed_label: find("detailed-label"),
            count: fields.len(),
        })
    }
}

/// Iterator over the records of a Zeek conn.log. Per-line problems are folded
/// into [`ParseDiagnostics`]; the only fatal error is a data line appearing
/// before any `#fields` header.
pub struct ZeekConnParser<R> {
    reader: R,
    columns: Option<Columns>,
    line_no: u64,
    diag: ParseDiagnostics,
    done: bool,
    buf: String,
}

impl<R: BufRead> ZeekConnParser<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            columns: None,
            line_no: 0,
            diag: ParseDiagnostics::default(),
            done: false,
            buf: String::new(),
        }
    }

    pub fn diagnostics(&self) -> &ParseDiagnostics {
        &self.diag
    }

    fn parse_line(&mut self, line: &str) -> Option<FlowRecord> {
        let columns = self.columns.as_ref().expect("header parsed");
        let mut values: Vec<&str> = line.split('\t').collect();
        // IoT23 labeled logs separate the appended label columns with spaces
        // rather than tabs; recover by splitting the overloaded last field.
        if values.len() < columns.count {
            if let Some(last) = values.pop() {
                values.extend(last.split_whitespace());
            }
        }
        let get =
            |idx: usize| -> Option<&str> { values.get(idx).copied().filter(|v| !is_unset(v)) };
        let opt_get = |idx: Option<usize>| idx.and_then(get);
        let line_no = self.line_no;

        macro_rules! skip {
            ($msg:expr) => {{
                self.diag.warn(line_no, $msg, true);
                return None;
            }};
        }

        let ts = match get(columns.ts) {
            Some(v) => match v.parse::<f64>() {
                Ok(ts) => ts,
                Err(_) => skip!(format!("bad ts {v:?}")),
            },
            None => skip!("unset ts"),
        };
        let src_ip: IpAddr = match get(columns.orig_h).map(str::parse) {
            Some(Ok(ip)) => ip,
            Some(Err(_)) => skip!("bad id.orig_h"),
            None => skip!("unset id.orig_h"),
        };
        let dst_ip: IpAddr = match get(columns.resp_h).map(str::parse) {
            Some(Ok(ip)) => ip,
            Some(Err(_)) => skip!("bad id.resp_h"),
            None => skip!("unset id.resp_h"),
        };
        let mut soft: Vec<String> = Vec::new();
        let mut parse_port = |idx: usize, name: &str| -> Result<u16, String> {
            match get(idx) {
                Some(v) => v.parse::<u16>().map_err(|_| format!("bad {name} {v:?}")),
                None => {
                    soft.push(format!("unset {name}, defaulted to 0"));
                    Ok(0)
                }
            }
        };
        let src_port = match parse_port(columns.orig_p, "id.orig_p") {
            Ok(p) => p,
            Err(msg) => skip!(msg),
        };
        let dst_port = match parse_port(columns.resp_p, "id.resp_p") {
            Ok(p) => p,
            Err(msg) => skip!(msg),
        };
        let transport = match get(columns.proto) {
            Some(v) => Transport::parse(v),
            None => {
                soft.push("unset proto".to_string());
                Transport::Other("unknown".to_string())
            }
        };

        let duration_s = match opt_get(columns.duration) {
            Some(v) => match v.parse::<f64>() {
                Ok(d) if d >= 0.0 => d,
                _ => skip!(format!("bad duration {v:?}")),
            },
            None => {
                soft.push("unset duration, defaulted to 0".to_string());
                0.0
            }
        };
        let parse_count = |idx: Option<usize>, name: &str| -> Result<u64, String> {
            match opt_get(idx) {
                Some(v) => v.parse::<u64>().map_err(|_| format!("bad {name} {v:?}")),
                None => Ok(0),
            }
        };
        let fwd_bytes = match parse_count(columns.orig_bytes, "orig_bytes") {
            Ok(v) => v,
            Err(msg) => skip!(msg),
        };
        let bwd_bytes = match parse_count(columns.resp_bytes, "resp_bytes") {
            Ok(v) => v,
            Err(msg) => skip!(msg),
        };
        let fwd_packets = match parse_count(columns.orig_pkts, "orig_pkts") {
            Ok(v) => v,
            Err(msg) => skip!(msg),
        };
        let bwd_packets = match parse_count(columns.resp_pkts, "resp_pkts") {
            Ok(v) => v,
            Err(msg) => skip!(msg),
        };

        let tcp_flags = if transport == Transport::Tcp {
            opt_get(columns.history)
                .map(flags_from_history)
                .unwrap_or_default()
        } else {
            BTreeMap::new()
        };

        let mut app_fields = BTreeMap::new();
        if let Some(state) = opt_get(columns.conn_state) {
            app_fields.insert("conn_state".to_string(), state.to_string());
        }
        // IoT23 puts the attack category in detailed-label; plain label only
        // says Benign/Malicious. Prefer the specific one, verbatim.
        let label = opt_get(columns.detailed_label)
            .or_else(|| opt_get(columns.label))
            .map(|v| v.trim().to_string());

        for msg in soft {
            self.diag.warn(line_no, msg, false);
        }
        self.diag.record();
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
            app_service: opt_get(columns.service).map(|s| s.to_string()),
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

/// Maps Zeek history letters onto flag symbols. Direction case is ignored;
/// `h` (SYN+ACK) counts both flags.
fn flags_from_history(history: &str) -> BTreeMap<TcpFlag, u32> {
    let mut flags = BTreeMap::new();
    let mut bump = |flag: TcpFlag| *flags.entry(flag).or_insert(0) += 1;
    for ch in history.chars() {
        match ch.to_ascii_uppercase() {
            'S' => bump(TcpFlag::Syn),
            'H' => {
                bump(TcpFlag::Syn);
                bump(TcpFlag::Ack);
            }
            'A' => bump(TcpFlag::Ack),
            'F' => bump(TcpFlag::Fin),
            'R' => bump(TcpFlag::Rst),
            _ => {}
        }
    }
    flags
}

impl<R: BufRead> Iterator for ZeekConnParser<R> {
    type Item = Result<FlowRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
            self.line_no += 1;
            let line = self.buf.trim_end_matches(['\n', '\r']).to_string();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#fields") {
                let fields: Vec<&str> = rest.split(['\t', ' ']).filter(|f| !f.is_empty()).collect();
                match Columns::from_header(&fields) {
                    Ok(cols) => {
                        self.columns = Some(cols);
                        continue;
                    }
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e));
                    }
                }
            }
            if line.starts_with('#') {
                continue;
            }
            if self.columns.is_none() {
                self.done = true;
                return Some(Err(IngestError::MissingHeader));
            }
            if let Some(record) = self.parse_line(&line) {
                return Some(Ok(record));
            }
            // Line was skipped with a warning; keep going.
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const HEADER: &str = "#fields\tts\tuid\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tproto\tservice\tduration\torig_bytes\tresp_bytes\tconn_state\thistory\torig_pkts\tresp_pkts";

    fn parse_all(input: &str) -> (Vec<FlowRecord>, ParseDiagnostics) {
        let mut parser = ZeekConnParser::new(Cursor::new(input.to_string()));
        let mut records = Vec::new();
        for item in &mut parser {
            records.push(item.expect("no fatal error"));
        }
        let diag = parser.diagnostics().clone();
        (records, diag)
    }

    #[test]
    fn parses_basic_rows() {
        let input = format!(
            "#separator \\x09\n{HEADER}\n\
             1499449062.5\tCuid1\t10.0.2.15\t54321\t192.168.10.50\t21\ttcp\tftp\t1.25\t320\t210\tSF\tShADaf\t6\t5\n\
             1499449063.5\tCuid2\t10.0.2.15\t54322\t192.168.10.50\t21\ttcp\tftp\t0.75\t100\t90\tSF\tShAD\t3\t2\n"
        );
        let (records, diag) = parse_all(&input);
        assert_eq!(records.len(), 2);
        assert_eq!(diag.records, 2);
        assert_eq!(diag.total_warnings(), 0);
        let r = &records[0];
        assert_eq!(r.src_ip, "10.0.2.15".parse::<IpAddr>().unwrap());
        assert_eq!(r.src_port, 54321);
        assert_eq!(r.dst_ip, "192.168.10.50".parse::<IpAddr>().unwrap());
        assert_eq!(r.dst_port, 21);
        assert_eq!(r.transport, Transport::Tcp);
        assert_eq!(r.app_service.as_deref(), Some("ftp"));
        assert_eq!(r.duration_s, 1.25);
        assert_eq!(r.fwd_bytes, 320);
        assert_eq!(r.bwd_bytes, 210);
        assert_eq!(r.fwd_packets, 6);
        assert_eq!(r.bwd_packets, 5);
        // ShADaf: S, h(=S+A), A, a, f
        assert_eq!(r.tcp_flags[&TcpFlag::Syn], 2);
        assert_eq!(r.tcp_flags[&TcpFlag::Ack], 3);
        assert_eq!(r.tcp_flags[&TcpFlag::Fin], 1);
        assert_eq!(r.app_fields["conn_state"], "SF");
    }

    #[test]
    fn empty_file_yields_empty_stream() {
        let (records, diag) = parse_all("");
        assert!(records.is_empty());
        assert_eq!(diag.total_warnings(), 0);
    }

    #[test]
    fn comment_only_file_yields_empty_stream() {
        let input = format!("#separator \\x09\n{HEADER}\n#close 2020-01-01\n");
        let (records, diag) = parse_all(&input);
        assert!(records.is_empty());
        assert_eq!(diag.total_warnings(), 0);
    }

    #[test]
    fn unset_duration_maps_to_zero_with_warning() {
        let input =
            format!("{HEADER}\n1.0\tC\t10.0.0.1\t1\t10.0.0.2\t2\ttcp\t-\t-\t-\t-\tS0\tS\t1\t0\n");
        let (records, diag) = parse_all(&input);
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].duration_s, 0.0);
        assert_eq!(diag.soft_warnings, 1);
        assert_eq!(diag.skipped_lines, 0);
        assert!(records[0].app_service.is_none());
    }

    #[test]
    fn data_before_header_is_fatal() {
        let mut parser = ZeekConnParser::new(Cursor::new(
            "1.0\t10.0.0.1\t1\t10.0.0.2\t2\ttcp\n".to_string(),
        ));
        assert!(matches!(
            parser.next(),
            Some(Err(IngestError::MissingHeader))
        ));
        assert!(parser.next().is_none());
    }

    #[test]
    fn bad_lines_are_skipped_and_counted() {
        let input = format!(
            "{HEADER}\n\
             not-a-ts\tC\t10.0.0.1\t1\t10.0.0.2\t2\ttcp\t-\t1.0\t1\t1\tSF\tS\t1\t1\n\
             1.0\tC\tnot-an-ip\t1\t10.0.0.2\t2\ttcp\t-\t1.0\t1\t1\tSF\tS\t1\t1\n\
             1.0\tC\t10.0.0.1\t99999\t10.0.0.2\t2\ttcp\t-\t1.0\t1\t1\tSF\tS\t1\t1\n\
             2.0\tC\t10.0.0.1\t1\t10.0.0.2\t2\ttcp\t-\t1.0\t1\t1\tSF\tS\t1\t1\n"
        );
        let (records, diag) = parse_all(&input);
        assert_eq!(records.len(), 1);
        assert_eq!(diag.skipped_lines, 3);
        // Partition invariant: records + skipped = data lines.
        assert_eq!(diag.records + diag.skipped_lines, 4);
    }

    #[test]
    fn icmp_gets_dst_port_zero() {
        let input = format!(
            "{HEADER}\n1.0\tC\t10.0.0.1\t8\t10.0.0.2\t0\ticmp\t-\t0.5\t64\t64\tOTH\t-\t1\t1\n"
        );
        let (records, _) = parse_all(&input);
        assert_eq!(records[0].transport, Transport::Icmp);
        assert_eq!(records[0].dst_port, 0);
        assert!(records[0].tcp_flags.is_empty());
    }

    #[test]
    fn iot23_space_separated_label_columns() {
        let header = format!("{HEADER}\ttunnel_parents\tlabel\tdetailed-label");
        let input = format!(
            "{header}\n1.0\tC\t10.0.0.1\t1\t10.0.0.2\t2\ttcp\t-\t1.0\t1\t1\tSF\tS\t1\t1\t-   Malicious   PartOfAHorizontalPortScan\n"
        );
        let (records, _) = parse_all(&input);
        assert_eq!(records.len(), 1);
        assert_eq!(
            records[0].label.as_deref(),
            Some("PartOfAHorizontalPortScan")
        );
    }

    #[test]
    fn labeled_zeek_with_tabs() {
        let header = format!("{HEADER}\tlabel");
        let input = format!(
            "{header}\n1.0\tC\t10.0.0.1\t1\t10.0.0.2\t2\ttcp\t-\t1.0\t1\t1\tSF\tS\t1\t1\tDDoS\n"
        );
        let (records, _) = parse_all(&input);
        assert_eq!(records[0].label.as_deref(), Some("DDoS"));
    }
}
