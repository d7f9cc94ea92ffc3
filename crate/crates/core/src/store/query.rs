//! Row selection over any table, with an optional join and conjunctive predicates.
//!
//! Text form: `<table> [join <table>] [where <field> <op> <value> [and ...]]`,
//! e.g. `ptm_package where downloads >= 50` or
//! `ptm_app_link join repository where repository.stars > 10`.
//! Values are integers, `null`, or (optionally quoted) strings.

use std::fmt;
use std::str::FromStr;

use rusqlite::types::Value as SqlValue;
use serde_json::{Map, Value};

use super::schema::{Column, ColumnType, Table};
use super::Store;

pub type Row = Map<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("unknown field {field:?} in table {table}")]
    UnknownField { table: String, field: String },
    #[error("tables {0} and {1} cannot be joined")]
    UnsupportedJoin(Table, Table),
    #[error("malformed selector: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn sql(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn parse(tok: &str) -> Option<CmpOp> {
        Some(match tok {
            "=" | "==" => CmpOp::Eq,
            "!=" | "<>" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    /// `column` (left table) or `table.column`.
    pub field: String,
    pub op: CmpOp,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selector {
    pub table: Table,
    pub join: Option<Table>,
    pub predicates: Vec<Predicate>,
}

impl Selector {
    pub fn all(table: Table) -> Self {
        Selector {
            table,
            join: None,
            predicates: Vec::new(),
        }
    }

    pub fn join(mut self, other: Table) -> Self {
        self.join = Some(other);
        self
    }

    pub fn filter(mut self, field: &str, op: CmpOp, value: impl Into<Value>) -> Self {
        self.predicates.push(Predicate {
            field: field.to_string(),
            op,
            value: value.into(),
        });
        self
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.table)?;
        if let Some(j) = self.join {
            write!(f, " join {j}")?;
        }
        for (i, p) in self.predicates.iter().enumerate() {
            f.write_str(if i == 0 { " where " } else { " and " })?;
            write!(f, "{} {} {}", p.field, p.op.sql(), p.value)?;
        }
        Ok(())
    }
}

fn tokenize(text: &str) -> Result<Vec<String>, QueryError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '\'' || c == '"' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some(q) if q == c => break,
                    Some(ch) => s.push(ch),
                    None => return Err(QueryError::Syntax("unterminated quote".into())),
                }
            }
            // Marker so quoted values stay strings.
            tokens.push(format!("\u{0}{s}"));
        } else if "=!<>".contains(c) {
            let mut op = String::new();
            while let Some(&ch) = chars.peek() {
                if "=!<>".contains(ch) {
                    op.push(ch);
                    chars.next();
                } else {
                    break;
                }
            }
            tokens.push(op);
        } else {
            let mut word = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || "=!<>'\"".contains(ch) {
                    break;
                }
                word.push(ch);
                chars.next();
            }
            tokens.push(word);
        }
    }
    Ok(tokens)
}

fn literal(tok: &str) -> Value {
    if let Some(s) = tok.strip_prefix('\u{0}') {
        return Value::String(s.to_string());
    }
    if tok.eq_ignore_ascii_case("null") {
        return Value::Null;
    }
    if let Ok(i) = tok.parse::<i64>() {
        return Value::from(i);
    }
    Value::String(tok.to_string())
}

impl FromStr for Selector {
    type Err = QueryError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let tokens = tokenize(text)?;
        let mut it = tokens.iter().map(String::as_str).peekable();
        let table_tok = it
            .next()
            .ok_or_else(|| QueryError::Syntax("empty selector".into()))?;
        let table: Table = table_tok
            .parse()
            .map_err(|_| QueryError::UnknownTable(table_tok.to_string()))?;
        let mut sel = Selector::all(table);
        if it.peek().is_some_and(|t| t.eq_ignore_ascii_case("join")) {
            it.next();
            let j = it
                .next()
                .ok_or_else(|| QueryError::Syntax("join needs a table".into()))?;
            sel.join = Some(j.parse().map_err(|_| QueryError::UnknownTable(j.to_string()))?);
        }
        match it.next() {
            None => return Ok(sel),
            Some(w) if w.eq_ignore_ascii_case("where") => {}
            Some(other) => return Err(QueryError::Syntax(format!("expected 'where', found {other:?}"))),
        }
        loop {
            let field = it
                .next()
                .ok_or_else(|| QueryError::Syntax("predicate needs a field".into()))?;
            let op_tok = it
                .next()
                .ok_or_else(|| QueryError::Syntax(format!("predicate on {field} needs an operator")))?;
            let op = CmpOp::parse(op_tok)
                .ok_or_else(|| QueryError::Syntax(format!("unknown operator {op_tok:?}")))?;
            let value = it
                .next()
                .ok_or_else(|| QueryError::Syntax(format!("predicate on {field} needs a value")))?;
            sel.predicates.push(Predicate {
                field: field.to_string(),
                op,
                value: literal(value),
            });
            match it.next() {
                None => break,
                Some(w) if w.eq_ignore_ascii_case("and") => continue,
                Some(other) => return Err(QueryError::Syntax(format!("expected 'and', found {other:?}"))),
            }
        }
        Ok(sel)
    }
}

fn sql_value(v: &Value) -> SqlValue {
    match v {
        Value::Null => SqlValue::Null,
        Value::Bool(b) => SqlValue::Integer(*b as i64),
        Value::Number(n) => n
            .as_i64()
            .map(SqlValue::Integer)
            .unwrap_or_else(|| SqlValue::Real(n.as_f64().unwrap_or(0.0))),
        Value::String(s) => SqlValue::Text(s.clone()),
        other => SqlValue::Text(other.to_string()),
    }
}

pub(crate) fn json_value(col: Column, v: SqlValue) -> Value {
    match (col.ty, v) {
        (_, SqlValue::Null) => Value::Null,
        (ColumnType::Integer, SqlValue::Integer(i)) => Value::from(i),
        (ColumnType::Json, SqlValue::Text(t)) => serde_json::from_str(&t).unwrap_or(Value::String(t)),
        (_, SqlValue::Text(t)) => Value::String(t),
        (_, SqlValue::Integer(i)) => Value::from(i),
        (_, SqlValue::Real(r)) => Value::from(r),
        (_, SqlValue::Blob(b)) => Value::String(String::from_utf8_lossy(&b).into_owned()),
    }
}

impl Store {
    /// Rows matching `selector`, ordered by the primary key of its table.
    pub fn query(&self, selector: &Selector) -> Result<Vec<Row>, super::StoreError> {
        let left = selector.table;
        let mut select = Vec::new();
        let mut out_cols: Vec<(String, Column)> = Vec::new();
        for c in left.columns() {
            select.push(format!("l.{}", c.name));
            out_cols.push((c.name.to_string(), *c));
        }
        let mut from = format!("{} AS l", left.name());
        if let Some(right) = selector.join {
            let (lc, rc) = left
                .join_on(right)
                .ok_or(QueryError::UnsupportedJoin(left, right))?;
            from.push_str(&format!(" JOIN {} AS r ON l.{lc} = r.{rc}", right.name()));
            for c in right.columns() {
                select.push(format!("r.{}", c.name));
                out_cols.push((format!("{}.{}", right.name(), c.name), *c));
            }
        }
        let mut clauses = Vec::new();
        let mut params = Vec::new();
        for p in &selector.predicates {
            let (alias, table, column) = match p.field.split_once('.') {
                Some((t, c)) if t == left.name() => ("l", left, c),
                Some((t, c)) if Some(t) == selector.join.map(|j| j.name()) => {
                    ("r", selector.join.expect("checked"), c)
                }
                Some((t, _)) => return Err(QueryError::UnknownTable(t.to_string()).into()),
                None => ("l", left, p.field.as_str()),
            };
            if table.column(column).is_none() {
                return Err(QueryError::UnknownField {
                    table: table.name().to_string(),
                    field: column.to_string(),
                }
                .into());
            }
            match (&p.value, p.op) {
                (Value::Null, CmpOp::Eq) => clauses.push(format!("{alias}.{column} IS NULL")),
                (Value::Null, CmpOp::Ne) => clauses.push(format!("{alias}.{column} IS NOT NULL")),
                (v, op) => {
                    params.push(sql_value(v));
                    clauses.push(format!("{alias}.{column} {} ?{}", op.sql(), params.len()));
                }
            }
        }
        let order: Vec<String> = left.key().iter().map(|k| format!("l.{k}")).collect();
        let mut sql = format!("SELECT {} FROM {from}", select.join(", "));
        if !clauses.is_empty() {
            sql.push_str(" WHERE ");
            sql.push_str(&clauses.join(" AND "));
        }
        sql.push_str(" ORDER BY ");
        sql.push_str(&order.join(", "));

        let mut stmt = self.conn.prepare(&sql)?;
        let rows = stmt.query_map(rusqlite::params_from_iter(params), |r| {
            let mut row = Row::new();
            for (i, (name, col)) in out_cols.iter().enumerate() {
                row.insert(name.clone(), json_value(*col, r.get::<_, SqlValue>(i)?));
            }
            Ok(row)
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatchStrength, PtmAppLink, PtmId, PtmPackage, Registry, RepoId, Repository};

    fn fixture() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Store::open(dir.path()).unwrap();
        for (name, dl) in [("a", 10), ("b", 50), ("c", 900)] {
            let mut p = PtmPackage::new(Registry::HuggingFace, name);
            p.downloads = dl;
            s.upsert_package(&p).unwrap();
        }
        (dir, s)
    }

    #[test]
    fn threshold_filter() {
        let (_d, s) = fixture();
        let rows = s.query(&"ptm_package where downloads >= 50".parse().unwrap()).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r["name"].as_str().unwrap()).collect();
        assert_eq!(names, vec!["b", "c"]);
    }

    #[test]
    fn empty_table_yields_nothing() {
        let (_d, s) = fixture();
        assert!(s.query(&Selector::all(Table::Repository)).unwrap().is_empty());
    }

    #[test]
    fn unknown_field_and_table() {
        let (_d, s) = fixture();
        let err = s.query(&"ptm_package where speed > 1".parse().unwrap()).unwrap_err();
        assert!(err.to_string().contains("speed"));
        assert!(matches!(
            "models where x = 1".parse::<Selector>(),
            Err(QueryError::UnknownTable(_))
        ));
    }

    #[test]
    fn join_links_to_repositories() {
        let (_d, mut s) = fixture();
        for (i, repo) in ["o/r1", "o/r2", "o/r3"].iter().enumerate() {
            let mut r = Repository::new("github", *repo).unwrap();
            r.stars = i as u64 * 10;
            s.upsert_repository(&r).unwrap();
            s.insert_link(&PtmAppLink {
                repo_id: r.id.clone(),
                ptm_id: PtmId::for_package(Registry::HuggingFace, "b"),
                evidence: vec![format!("ev{i}")],
                match_strength: MatchStrength::Exact,
            })
            .unwrap();
        }
        let rows = s
            .query(&Selector::all(Table::PtmAppLink).join(Table::Repository))
            .unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0]["repository.full_name"], "o/r1");
        assert_eq!(rows[2]["evidence"], serde_json::json!(["ev2"]));
        let rows = s
            .query(&"ptm_app_link join repository where repository.stars > 5".parse().unwrap())
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r["repo_id"] != RepoId::from("github/o/r1").0));
    }

    #[test]
    fn null_and_quoted_values() {
        let (_d, s) = fixture();
        let rows = s.query(&"ptm_package where license_raw = null and name != 'a'".parse().unwrap()).unwrap();
        assert_eq!(rows.len(), 2);
        let sel: Selector = "ptm_package where name = \"c\"".parse().unwrap();
        assert_eq!(sel.predicates[0].value, Value::String("c".into()));
        assert_eq!(s.query(&sel).unwrap().len(), 1);
    }

    #[test]
    fn bad_join_is_rejected() {
        let (_d, s) = fixture();
        let err = s
            .query(&Selector::all(Table::PtmPackage).join(Table::Repository))
            .unwrap_err();
        assert!(err.to_string().contains("cannot be joined"));
    }
}
