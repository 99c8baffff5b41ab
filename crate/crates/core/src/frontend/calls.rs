//! Syntactic call sites, used as the reference set for call-graph coverage.

use serde::{Deserialize, Serialize};

use super::ast::{walk_exprs, Ast, ExprKind};
use crate::span::SourceSpan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstCallRecord {
    pub span: SourceSpan,
    /// Source text of the callee expression.
    pub callee_text: String,
    /// Attribute name for `a.f(...)`, variable name for `f(...)`, otherwise
    /// the callee text.
    pub simple_name: String,
}

/// Every call expression in the module, ordered by start position with outer
/// calls before the calls nested at the same start.
pub fn collect_ast_calls(ast: &Ast) -> Vec<AstCallRecord> {
    let mut out = Vec::new();
    walk_exprs(&ast.body, &mut |e| {
        if let ExprKind::Call { func, .. } = &e.kind {
            let callee_text = ast.text(&func.span).to_string();
            let simple_name = match &func.kind {
                ExprKind::Name(n) => n.clone(),
                ExprKind::Attribute { attr, .. } => attr.clone(),
                _ => callee_text.clone(),
            };
            out.push(AstCallRecord { span: e.span.clone(), callee_text, simple_name });
        }
    });
    out.sort_by(|a, b| {
        a.span
            .start()
            .cmp(&b.span.start())
            .then_with(|| b.span.end().cmp(&a.span.end()))
    });
    out
}
