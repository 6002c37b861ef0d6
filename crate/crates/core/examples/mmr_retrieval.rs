//! Chunk a small tactic reference, embed it with the hashing embedder and
//! pick diverse chunks for a query.

use proofopt::retrieval::{chunk_markdown, mmr_indices, Embedder, HashingEmbedder};

const DOCS: &str = "# simp\nUse `simp` to rewrite with simp lemmas.\n\n# simp only\n`simp only [h]` rewrites with the given lemmas only.\n\n# omega\nDecides linear arithmetic over ℕ and ℤ.\n\n# exact\n`exact e` closes the goal with the term `e`.\n";

fn main() {
    let chunks = chunk_markdown(DOCS, 200, 40).unwrap();
    let embedder = HashingEmbedder::new(256);
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let vectors = embedder.embed(&texts).unwrap();
    let query = embedder.embed_one("simplify the goal with simp").unwrap();
    for lambda in [1.0, 0.3] {
        println!("lambda = {lambda}");
        for i in mmr_indices(&query, &vectors, 3, lambda).unwrap() {
            println!("  {}", chunks[i].text.lines().next().unwrap_or(""));
        }
    }
}
