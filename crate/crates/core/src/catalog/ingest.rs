use std::collections::HashMap;
use std::path::Path;

use super::{CatalogError, Interaction, InteractionLog, Vocabulary};

/// Column names for transaction CSV ingestion.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CsvSchema {
    pub session: String,
    pub user: String,
    pub item: String,
    pub position: String,
}

impl CsvSchema {
    /// Instacart order-products export joined with orders.
    pub fn instacart() -> Self {
        Self {
            session: "order_id".to_string(),
            user: "user_id".to_string(),
            item: "product_id".to_string(),
            position: "add_to_cart_order".to_string(),
        }
    }
}

/// Reads a transactions CSV into a vocabulary and per-user log.
///
/// Users, sessions, and items are interned by first appearance, so a file
/// whose sessions appear in chronological order yields a chronologically
/// ordered log.
pub fn ingest_transactions(
    path: &Path,
    schema: &CsvSchema,
) -> Result<(Vocabulary, InteractionLog), CatalogError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CatalogError::Io {
            path: path.display().to_string(),
            source,
        },
        other => CatalogError::MalformedRow {
            line: 0,
            reason: format!("{other:?}"),
        },
    })?;

    let headers = reader
        .headers()
        .map_err(|e| CatalogError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let column = |name: &str| -> Result<usize, CatalogError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CatalogError::UnknownColumn(name.to_string()))
    };
    let session_col = column(&schema.session)?;
    let user_col = column(&schema.user)?;
    let item_col = column(&schema.item)?;
    let position_col = column(&schema.position)?;

    let mut vocab = Vocabulary::new();
    let mut users: HashMap<String, u32> = HashMap::new();
    let mut sessions: HashMap<String, u32> = HashMap::new();
    let mut records = Vec::new();

    for row in reader.records() {
        let row = row.map_err(|e| CatalogError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |idx: usize| -> Result<&str, CatalogError> {
            row.get(idx).ok_or_else(|| CatalogError::MalformedRow {
                line,
                reason: format!("missing field {idx}"),
            })
        };
        let user_key = field(user_col)?;
        let next_user = users.len() as u32;
        let user = *users.entry(user_key.to_string()).or_insert(next_user);
        let session_key = field(session_col)?;
        let next_session = sessions.len() as u32;
        let session = *sessions.entry(session_key.to_string()).or_insert(next_session);
        let item = vocab.intern(field(item_col)?);
        vocab.record_occurrence(item);
        let position: u32 =
            field(position_col)?
                .trim()
                .parse()
                .map_err(|e| CatalogError::MalformedRow {
                    line,
                    reason: format!("position: {e}"),
                })?;
        records.push(Interaction {
            user,
            session,
            item,
            position,
        });
    }

    if records.is_empty() {
        return Err(CatalogError::EmptyInput);
    }
    Ok((vocab, InteractionLog::new(records)?))
}
