// Trace-panel fidelity against a recorded service payload: the panel lists
// exactly the activated memory indices and both controller verdicts present
// in the API trace — nothing re-ranked, nothing invented.

import { readFileSync } from "fs";
import { join } from "path";
import { describe, expect, it } from "vitest";

import type { MemoryPage, TurnTrace } from "../src/api.js";
import {
  escapeHtml,
  renderMemoryPage,
  renderTracePanel,
} from "../src/views.js";

const fixture: TurnTrace = JSON.parse(
  readFileSync(join(__dirname, "fixtures", "trace.json"), "utf-8"),
);

function dataTurns(html: string, selector: RegExp): number[] {
  return [...html.matchAll(selector)].map((match) => Number(match[1]));
}

describe("renderTracePanel on the recorded fixture", () => {
  const html = renderTracePanel(fixture);

  it("lists exactly the retrieved indices, in payload order", () => {
    const listed = dataTurns(
      html.slice(html.indexOf("<ol"), html.indexOf("</ol>")),
      /data-turn="(\d+)"/g,
    );
    expect(listed).toEqual(fixture.retrieved.map((memory) => memory.item_index));
  });

  it("shows the activation verdict with its raw output", () => {
    expect(fixture.activation_decision).not.toBeNull();
    expect(html).toContain('data-question="activate_memory"');
    expect(html).toContain(escapeHtml(fixture.activation_decision!.raw_model_output));
    expect(html).toContain('class="verdict verdict-yes"');
  });

  it("shows every summary-decision verdict", () => {
    const summaryBlocks = html.match(/data-question="use_summary"/g) ?? [];
    expect(summaryBlocks.length).toBe(fixture.summary_decisions.length);
    expect(fixture.summary_decisions.length).toBeGreaterThan(0);
  });

  it("carries the scores verbatim from the payload", () => {
    for (const memory of fixture.retrieved) {
      expect(html).toContain(`rank ${memory.rank_score.toFixed(4)}`);
      expect(html).toContain(`recency ${memory.recency_score.toFixed(4)}`);
      expect(html).toContain(`relevance ${memory.relevance_score.toFixed(4)}`);
    }
  });

  it("marks the leading memory as top-ranked", () => {
    const topTurn = fixture.retrieved[0].item_index;
    expect(html).toMatch(
      new RegExp(`class="mem top-ranked" data-turn="${topTurn}"`),
    );
  });

  it("includes the fused prompt, collapsed", () => {
    expect(html).toContain("<details");
    expect(html).toContain(escapeHtml(fixture.fused_prompt).slice(0, 60));
  });

  it("matches the committed snapshot", () => {
    expect(html).toMatchSnapshot();
  });
});

describe("renderTracePanel edge states", () => {
  it("declined activation shows the empty state and the raw verdict", () => {
    const declined: TurnTrace = {
      ...fixture,
      retrieved: [],
      rendered: [],
      summary_decisions: [],
      activation_decision: {
        question: "activate_memory",
        raw_model_output: "no(B)",
        parsed: false,
        fallback_used: false,
      },
    };
    const html = renderTracePanel(declined);
    expect(html).toContain("no memory activated");
    expect(html).toContain("no(B)");
    expect(html).toContain('class="verdict verdict-no"');
  });

  it("escapes markup in model output", () => {
    const hostile: TurnTrace = {
      ...fixture,
      response: "<script>alert(1)</script>",
      fused_prompt: "<img src=x>",
    };
    const html = renderTracePanel(hostile);
    expect(html).not.toContain("<img src=x>");
    expect(html).toContain("&lt;img src=x&gt;");
  });
});

describe("renderMemoryPage", () => {
  it("fresh session shows the empty state", () => {
    const empty: MemoryPage = { items: [], page: 1, page_size: 20, total: 0 };
    expect(renderMemoryPage(empty)).toContain("no memories yet");
  });

  it("renders both full and summary views per item", () => {
    const page: MemoryPage = {
      items: [
        {
          index: 0,
          observation: "obs text",
          response: "resp text",
          observation_summary: "obs sum",
          response_summary: "resp sum",
          created_turn: 0,
          last_accessed_turn: 3,
          token_count_full: 4,
          token_count_summary: 3,
          embedding_norm: 1.0,
        },
      ],
      page: 1,
      page_size: 20,
      total: 1,
    };
    const html = renderMemoryPage(page);
    expect(html).toContain("obs text");
    expect(html).toContain("obs sum");
    expect(html).toContain('<details class="mem-full" open>');
    expect(html).toContain('<details class="mem-summary">');
  });
});
