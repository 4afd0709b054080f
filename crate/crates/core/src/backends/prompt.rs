use crate::table_trie::Table;

const INSTRUCTION: &str = "Answer the question about the table. Reason step by step and \
separate consecutive steps with a blank line. Finish with \"Final Answer is \\boxed{ANSWER}\".";

/// Completion prompt: instruction, table, question, then the steps so far.
pub fn build_prompt(table: &Table, question: &str, prior_steps: &[String]) -> String {
    let mut p = String::with_capacity(256);
    p.push_str(INSTRUCTION);
    p.push_str("\n\nTable:\n");
    p.push_str(&table.to_markdown());
    p.push_str("\nQuestion: ");
    p.push_str(question.trim());
    p.push_str("\n\n");
    for s in prior_steps {
        p.push_str(s);
    }
    p
}
