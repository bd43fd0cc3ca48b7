use std::fmt::Write as _;
use std::io::Write;

use serde_json::{json, Map, Value};

use super::{GraphError, Label, PropValue, Properties, PropertyGraph, VertexKind};
use crate::flow::{Asset, AssetFlow};
use crate::types::{parse_bytes, parse_word};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    GraphSon,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "graphson" | "json" => Ok(ExportFormat::GraphSon),
            other => Err(format!("unknown export format `{other}`")),
        }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn dot_attrs(props: &Properties) -> String {
    let mut out = String::new();
    for (k, v) in props {
        let _ = write!(out, ", {k}=\"{}\"", dot_escape(&v.to_string()));
    }
    out
}

fn vertex_caption(kind: VertexKind, props: &Properties) -> String {
    let get = |k: &str| props.get(k).map(|v| v.to_string()).unwrap_or_default();
    match kind {
        VertexKind::Contract => get("addr"),
        VertexKind::BasicBlock => format!("pc {} #{}", get("pc"), get("index")),
        VertexKind::DataSource => format!("{}@{}", get("identifier"), get("index")),
    }
}

/// Graphviz rendering. Output depends only on the graph's content.
pub fn to_dot(graph: &PropertyGraph) -> String {
    let mut out = String::from("digraph epg {\n");
    for v in graph.vertices() {
        let shape = match v.kind {
            VertexKind::Contract => "box",
            VertexKind::BasicBlock => "ellipse",
            VertexKind::DataSource => "diamond",
        };
        let _ = writeln!(
            out,
            "  v{} [label=\"{}\", shape={shape}, kind=\"{}\"{}];",
            v.id,
            dot_escape(&vertex_caption(v.kind, &v.props)),
            v.kind.name(),
            dot_attrs(&v.props)
        );
    }
    for e in graph.edges() {
        let _ = writeln!(out, "  v{} -> v{} [label=\"{}\"{}];", e.tail, e.head, e.label, dot_attrs(&e.props));
    }
    out.push_str("}\n");
    out
}

fn typed(ty: &str, value: Value) -> Value {
    json!({"@type": ty, "@value": value})
}

fn encode_value(v: &PropValue) -> Value {
    match v {
        PropValue::Int(i) => typed("g:Int64", json!(i)),
        PropValue::Bool(b) => json!(b),
        PropValue::Str(s) => json!(s),
        PropValue::Word(w) => typed("epg:Word", json!(format!("{w:#x}"))),
        PropValue::Bytes(b) => typed("epg:Bytes", json!(format!("0x{}", hex::encode(b)))),
        PropValue::Flows(flows) => typed(
            "g:List",
            Value::Array(
                flows
                    .iter()
                    .map(|f| {
                        typed(
                            "g:Map",
                            json!([
                                "asset",
                                f.asset.to_string(),
                                "from",
                                f.from.to_string(),
                                "to",
                                f.to.to_string(),
                                "amount",
                                encode_value(&PropValue::Word(f.amount))
                            ]),
                        )
                    })
                    .collect(),
            ),
        ),
    }
}

fn bad(msg: impl Into<String>) -> GraphError {
    GraphError::Import(msg.into())
}

fn decode_flow(v: &Value) -> Result<AssetFlow, GraphError> {
    let items = v.get("@value").and_then(Value::as_array).ok_or_else(|| bad("flow is not a g:Map"))?;
    let mut asset = None;
    let mut from = None;
    let mut to = None;
    let mut amount = None;
    for pair in items.chunks(2) {
        let [k, val] = pair else { return Err(bad("odd g:Map length")) };
        match k.as_str() {
            Some("asset") => {
                let s = val.as_str().ok_or_else(|| bad("asset must be a string"))?;
                asset = Some(if s == "ETH" { Asset::Eth } else { Asset::Token(s.parse().map_err(|_| bad("bad asset"))?) });
            }
            Some("from") => from = val.as_str().and_then(|s| s.parse().ok()),
            Some("to") => to = val.as_str().and_then(|s| s.parse().ok()),
            Some("amount") => match decode_value(val)? {
                PropValue::Word(w) => amount = Some(w),
                _ => return Err(bad("amount must be an epg:Word")),
            },
            _ => return Err(bad("unexpected flow key")),
        }
    }
    match (asset, from, to, amount) {
        (Some(asset), Some(from), Some(to), Some(amount)) => Ok(AssetFlow { asset, from, to, amount }),
        _ => Err(bad("incomplete flow")),
    }
}

fn decode_value(v: &Value) -> Result<PropValue, GraphError> {
    match v {
        Value::Bool(b) => Ok(PropValue::Bool(*b)),
        Value::String(s) => Ok(PropValue::Str(s.clone())),
        Value::Object(o) => {
            let ty = o.get("@type").and_then(Value::as_str).ok_or_else(|| bad("missing @type"))?;
            let inner = o.get("@value").ok_or_else(|| bad("missing @value"))?;
            match ty {
                "g:Int64" | "g:Int32" => inner.as_u64().map(PropValue::Int).ok_or_else(|| bad("bad integer")),
                "epg:Word" => {
                    let s = inner.as_str().ok_or_else(|| bad("word must be a string"))?;
                    parse_word(s).map(PropValue::Word).map_err(|e| bad(e.to_string()))
                }
                "epg:Bytes" => {
                    let s = inner.as_str().ok_or_else(|| bad("bytes must be a string"))?;
                    parse_bytes(s).map(PropValue::Bytes).map_err(|e| bad(e.to_string()))
                }
                "g:List" => inner
                    .as_array()
                    .ok_or_else(|| bad("g:List must hold an array"))?
                    .iter()
                    .map(decode_flow)
                    .collect::<Result<Vec<_>, _>>()
                    .map(PropValue::Flows),
                other => Err(bad(format!("unsupported type {other}"))),
            }
        }
        _ => Err(bad("unsupported property value")),
    }
}

/// GraphSON 3 document in the TinkerGraph layout.
pub fn to_graphson(graph: &PropertyGraph) -> Value {
    let mut prop_id = 0u64;
    let vertices: Vec<Value> = graph
        .vertices()
        .iter()
        .map(|v| {
            let mut properties = Map::new();
            let mut all = v.props.clone();
            all.insert("kind".into(), PropValue::Str(v.kind.name().into()));
            for (k, val) in &all {
                let id = prop_id;
                prop_id += 1;
                properties.insert(
                    k.clone(),
                    json!([typed(
                        "g:VertexProperty",
                        json!({"id": typed("g:Int64", json!(id)), "value": encode_value(val), "label": k})
                    )]),
                );
            }
            typed(
                "g:Vertex",
                json!({"id": typed("g:Int64", json!(v.id)), "label": v.kind.name(), "properties": properties}),
            )
        })
        .collect();
    let edges: Vec<Value> = graph
        .edges()
        .iter()
        .map(|e| {
            let properties: Map<String, Value> = e
                .props
                .iter()
                .map(|(k, val)| (k.clone(), typed("g:Property", json!({"key": k, "value": encode_value(val)}))))
                .collect();
            typed(
                "g:Edge",
                json!({
                    "id": typed("g:Int64", json!(e.id)),
                    "label": e.label.to_string(),
                    "outV": typed("g:Int64", json!(e.tail)),
                    "outVLabel": graph.vertex(e.tail).kind.name(),
                    "inV": typed("g:Int64", json!(e.head)),
                    "inVLabel": graph.vertex(e.head).kind.name(),
                    "properties": properties,
                }),
            )
        })
        .collect();
    typed("tinker:graph", json!({"vertices": vertices, "edges": edges}))
}

fn field<'v>(v: &'v Value, key: &str) -> Result<&'v Value, GraphError> {
    v.get(key).ok_or_else(|| bad(format!("missing `{key}`")))
}

fn id_of(v: &Value) -> Result<usize, GraphError> {
    match decode_value(v)? {
        PropValue::Int(i) => Ok(i as usize),
        _ => Err(bad("ids must be g:Int64")),
    }
}

/// Reads a document written by [`to_graphson`]. Vertex and edge ids must be
/// dense and listed in order.
pub fn from_graphson(doc: &Value) -> Result<PropertyGraph, GraphError> {
    let body = field(doc, "@value")?;
    let mut graph = PropertyGraph::new();
    for (n, v) in field(body, "vertices")?.as_array().ok_or_else(|| bad("vertices must be an array"))?.iter().enumerate() {
        let v = field(v, "@value")?;
        if id_of(field(v, "id")?)? != n {
            return Err(bad("vertex ids must be dense and ordered"));
        }
        let label = field(v, "label")?.as_str().ok_or_else(|| bad("vertex label must be a string"))?;
        let kind = VertexKind::from_name(label).ok_or_else(|| bad(format!("unknown vertex kind {label}")))?;
        let mut props = Properties::new();
        if let Some(map) = v.get("properties").and_then(Value::as_object) {
            for (k, list) in map {
                if k == "kind" {
                    continue;
                }
                let first = list.as_array().and_then(|a| a.first()).ok_or_else(|| bad("empty vertex property"))?;
                props.insert(k.clone(), decode_value(field(field(first, "@value")?, "value")?)?);
            }
        }
        graph.add_vertex(kind, props);
    }
    for (n, e) in field(body, "edges")?.as_array().ok_or_else(|| bad("edges must be an array"))?.iter().enumerate() {
        let e = field(e, "@value")?;
        if id_of(field(e, "id")?)? != n {
            return Err(bad("edge ids must be dense and ordered"));
        }
        let label: Label = field(e, "label")?
            .as_str()
            .ok_or_else(|| bad("edge label must be a string"))?
            .parse()
            .map_err(|err: super::UnknownLabel| bad(err.to_string()))?;
        let mut props = Properties::new();
        if let Some(map) = e.get("properties").and_then(Value::as_object) {
            for (k, p) in map {
                props.insert(k.clone(), decode_value(field(field(p, "@value")?, "value")?)?);
            }
        }
        graph.add_edge(id_of(field(e, "outV")?)?, id_of(field(e, "inV")?)?, label, props)?;
    }
    Ok(graph)
}

/// Serializes `graph` into `sink`.
pub fn write_graph(graph: &PropertyGraph, format: ExportFormat, sink: &mut dyn Write) -> Result<(), GraphError> {
    match format {
        ExportFormat::Dot => sink.write_all(to_dot(graph).as_bytes())?,
        ExportFormat::GraphSon => {
            let text = serde_json::to_string_pretty(&to_graphson(graph)).expect("graph documents serialize");
            sink.write_all(text.as_bytes())?;
            sink.write_all(b"\n")?;
        }
    }
    sink.flush()?;
    Ok(())
}
