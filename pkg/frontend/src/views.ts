// Pure HTML-string renderers. Everything shown comes verbatim from API
// payloads: indices, scores, and verdicts are never recomputed or re-ranked
// on the client.

import type { ControllerDecision, JobStatus, MemoryPage, MemoryView, TurnTrace } from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const score = (value: number): string => value.toFixed(4);

function renderDecision(label: string, decision: ControllerDecision): string {
  const verdict = decision.parsed ? "yes" : "no";
  const fallback = decision.fallback_used ? ' <span class="fallback">fallback</span>' : "";
  return `<div class="decision" data-question="${escapeHtml(decision.question)}">
    <span class="decision-label">${escapeHtml(label)}</span>
    <span class="verdict verdict-${verdict}">${verdict}</span>${fallback}
    <code class="raw">${escapeHtml(decision.raw_model_output)}</code>
  </div>`;
}

export function renderTracePanel(trace: TurnTrace): string {
  const parts: string[] = [`<section class="trace" data-trace-turn="${trace.turn}">`];
  parts.push(`<h3>turn ${trace.turn}</h3>`);

  if (trace.activation_decision) {
    parts.push(renderDecision("activate memory?", trace.activation_decision));
  } else {
    parts.push(
      '<div class="decision"><span class="decision-label">activate memory?</span> not asked</div>',
    );
  }

  if (trace.retrieved.length === 0) {
    parts.push('<p class="empty">no memory activated</p>');
  } else {
    const rows = trace.retrieved
      .map((memory, position) => {
        const highlight = position === 0 ? " top-ranked" : "";
        return `<li class="mem${highlight}" data-turn="${memory.item_index}">
          <span class="mem-turn">turn ${memory.item_index}</span>
          <span class="mem-scores">rank ${score(memory.rank_score)} = recency ${score(
            memory.recency_score,
          )} + relevance ${score(memory.relevance_score)}</span>
        </li>`;
      })
      .join("\n");
    parts.push(`<ol class="activated">\n${rows}\n</ol>`);
  }

  for (const decision of trace.summary_decisions) {
    parts.push(renderDecision("use summary?", decision));
  }

  const renderings = trace.rendered
    .map(
      (entry) =>
        `<li data-turn="${entry.item_index}">turn ${entry.item_index}: ${escapeHtml(
          entry.rendering,
        )} (${entry.token_count} tokens)</li>`,
    )
    .join("\n");
  if (renderings) {
    parts.push(`<ul class="renderings">\n${renderings}\n</ul>`);
  }

  parts.push(
    `<p class="flash">flash memory: ${trace.flash_used ? "included" : "absent"}</p>`,
  );
  if (trace.notes.length > 0) {
    parts.push(
      `<ul class="notes">${trace.notes
        .map((note) => `<li>${escapeHtml(note)}</li>`)
        .join("")}</ul>`,
    );
  }
  parts.push(
    `<details class="fused"><summary>fused prompt</summary><pre>${escapeHtml(
      trace.fused_prompt,
    )}</pre></details>`,
  );
  parts.push("</section>");
  return parts.join("\n");
}

export function renderChatMessage(role: "user" | "assistant", text: string): string {
  return `<div class="msg ${role}"><pre>${escapeHtml(text)}</pre></div>`;
}

export function renderMemoryItem(memory: MemoryView): string {
  return `<li class="memory" data-index="${memory.index}">
    <header>
      <span class="mem-turn">turn ${memory.index}</span>
      <span class="mem-meta">${memory.token_count_full} tokens full / ${
        memory.token_count_summary
      } summary · last accessed ${memory.last_accessed_turn} · |e|=${memory.embedding_norm.toFixed(
        3,
      )}</span>
    </header>
    <details class="mem-full" open><summary>full</summary>
      <pre>${escapeHtml(memory.observation)}\n${escapeHtml(memory.response)}</pre>
    </details>
    <details class="mem-summary"><summary>summary</summary>
      <pre>${escapeHtml(memory.observation_summary)}\n${escapeHtml(memory.response_summary)}</pre>
    </details>
  </li>`;
}

export function renderMemoryPage(page: MemoryPage): string {
  if (page.total === 0) {
    return '<p class="empty">no memories yet</p>';
  }
  const items = page.items.map(renderMemoryItem).join("\n");
  const pages = Math.max(1, Math.ceil(page.total / page.page_size));
  return `<ul class="memories">\n${items}\n</ul>
<p class="pager">page ${page.page} of ${pages} · ${page.total} memories</p>`;
}

export function renderJob(job: JobStatus): string {
  if (job.status === "done") {
    return `<div class="job done"><h4>summary</h4><pre>${escapeHtml(
      job.final_summary ?? "",
    )}</pre><p>${job.tree?.length ?? 0} tree nodes</p></div>`;
  }
  if (job.status === "failed") {
    return `<div class="job failed">failed: ${escapeHtml(job.error ?? "unknown")}</div>`;
  }
  return `<div class="job pending">job ${escapeHtml(job.job_id)}: ${job.status}…</div>`;
}

export function renderError(message: string, retryable: boolean): string {
  const kind = retryable ? "retryable" : "fatal";
  return `<div class="error ${kind}">${escapeHtml(message)}${
    retryable ? " (retryable)" : ""
  }</div>`;
}
