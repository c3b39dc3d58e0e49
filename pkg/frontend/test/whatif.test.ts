import { readFileSync } from 'node:fs';
import { describe, expect, it } from 'vitest';

import { ApiCallError, ApiClient, type HttpFn } from '../src/api.js';
import {
  buildOverrides,
  compareAssessments,
  emptyDraft,
  isStale,
  renderComparison,
  renderWhatIf,
  WhatIfFlow,
} from '../src/whatif.js';
import type { Assessment, Finding, FindingsResponse } from '../src/types.js';

function fixture<T>(name: string): T {
  return JSON.parse(
    readFileSync(new URL(`./fixtures/${name}`, import.meta.url), 'utf8'),
  ) as T;
}

const baseline = fixture<Assessment>('assessment.json');
const whatIfEmpty = fixture<Assessment>('whatif_empty.json');
const whatIfClosed = fixture<Assessment>('whatif_close_sslv3.json');
const findings = fixture<FindingsResponse>('findings.json').findings;
const tlsFinding = findings.find(
  (f: Finding) => f.open && f.category === 'weak_tls_protocol',
)!;

interface RecordedCall {
  method: string;
  url: string;
  body?: unknown;
}

function recordingHttp(
  responses: Record<string, { status: number; body: unknown }>,
): { http: HttpFn; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const http: HttpFn = async (method, url, body) => {
    calls.push({ method, url, body });
    const key = `${method} ${url}`;
    const hit = responses[key];
    if (!hit) throw new Error(`unexpected call ${key}`);
    return hit;
  };
  return { http, calls };
}

describe('what-if comparison', () => {
  it('empty overrides reproduce the baseline: all deltas zero', () => {
    const comparison = compareAssessments(baseline, whatIfEmpty);
    expect(comparison.rows).toHaveLength(baseline.entries.length);
    for (const row of comparison.rows) expect(row.delta).toBe(0);
    expect(comparison.aggregateDelta).toBe(0);

    const html = renderComparison(baseline, whatIfEmpty);
    const deltas = [...html.matchAll(/<td class="num delta">([^<]+)<\/td>/g)].map(
      (m) => m[1],
    );
    expect(deltas.length).toBeGreaterThan(0);
    for (const delta of deltas) expect(delta).toBe('0');
    expect(html).toContain(`<td class="num delta aggregate-delta">0</td>`);
  });

  it('closing the SSLv3 finding shows the aggregate decrease the API reports', () => {
    const comparison = compareAssessments(baseline, whatIfClosed);
    const reported = whatIfClosed.aggregate - baseline.aggregate;
    expect(comparison.aggregateDelta).toBe(reported);
    expect(comparison.aggregateDelta).toBeLessThan(0);

    const html = renderComparison(baseline, whatIfClosed);
    expect(html).toContain(
      `<td colspan="2" class="num aggregate-base">${String(
        baseline.aggregate,
      )}</td>`,
    );
    expect(html).toContain(
      `<td colspan="2" class="num aggregate-hypo">${String(
        whatIfClosed.aggregate,
      )}</td>`,
    );
    expect(html).toContain(String(reported));
  });

  it('hypothetical responses are flagged and scenario drops render as dashes', () => {
    expect(whatIfClosed.hypothetical).toBe(true);
    const dropped = baseline.entries.filter(
      (e) => !whatIfClosed.entries.some((h) => h.s === e.s),
    );
    const html = renderComparison(baseline, whatIfClosed);
    for (const entry of dropped) {
      const row = html
        .split('<tr ')
        .find((chunk) => chunk.includes(`data-scenario="${entry.s}"`));
      expect(row).toContain('&mdash;');
    }
  });
});

describe('what-if flow (network level)', () => {
  it('submits only to the what-if endpoint, never a persistence endpoint', async () => {
    const { http, calls } = recordingHttp({
      'POST /api/orgs/st-vincent/what-if': { status: 200, body: whatIfClosed },
    });
    const flow = new WhatIfFlow(new ApiClient(http));
    const draft = emptyDraft();
    draft.closeFindings.add(tlsFinding.finding_id);
    const result = await flow.submit('st-vincent', draft);

    expect(result.aggregate).toBe(whatIfClosed.aggregate);
    expect(calls).toHaveLength(1);
    expect(calls[0]!.method).toBe('POST');
    expect(calls[0]!.url).toBe('/api/orgs/st-vincent/what-if');
    const persistence = calls.filter(
      (call) =>
        call.url.includes('/ingest/') ||
        call.url.includes('/verdict') ||
        (call.method === 'POST' && !call.url.endsWith('/what-if')),
    );
    expect(persistence).toHaveLength(0);
    expect(calls[0]!.body).toEqual({
      overrides: [
        { action: 'close_finding', finding_id: tlsFinding.finding_id },
      ],
    });
  });

  it('builds overrides from the draft deterministically', () => {
    const draft = emptyDraft();
    draft.closeFindings.add('bbb');
    draft.closeFindings.add('aaa');
    draft.pinnedC.set('denial', 1.0);
    expect(buildOverrides(draft)).toEqual([
      { action: 'close_finding', finding_id: 'aaa' },
      { action: 'close_finding', finding_id: 'bbb' },
      { action: 'force_c', scenario: 'denial', value: 1.0 },
    ]);
  });

  it('invalid finding ids surface the API error envelope inline', async () => {
    const envelope = {
      status: 404,
      code: 'not_found',
      message: 'unknown finding: zzz',
      correlation_id: 'deadbeefdeadbeefdeadbeefdeadbeef',
    };
    const { http } = recordingHttp({
      'POST /api/orgs/st-vincent/what-if': { status: 404, body: envelope },
    });
    const flow = new WhatIfFlow(new ApiClient(http));
    const draft = emptyDraft();
    draft.closeFindings.add('zzz');
    let caught: ApiCallError | null = null;
    try {
      await flow.submit('st-vincent', draft);
    } catch (error) {
      caught = error as ApiCallError;
    }
    expect(caught).toBeInstanceOf(ApiCallError);
    const html = renderWhatIf(baseline, null, draft, findings, caught!.error);
    expect(html).toContain('inline-error');
    expect(html).toContain('deadbeefdeadbeefdeadbeefdeadbeef');
  });

  it('stale baselines prompt a refresh', () => {
    const refreshed: Assessment = {
      ...baseline,
      assessed_at: '2026-03-12T00:00:00Z',
    };
    expect(isStale(refreshed, baseline)).toBe(true);
    expect(isStale(baseline, baseline)).toBe(false);
    const html = renderWhatIf(
      baseline,
      null,
      emptyDraft(),
      findings,
      null,
      true,
    );
    expect(html).toContain('banner stale');
    expect(html).toContain('data-action="refresh-baseline"');
  });

  it('renders a prompt before a baseline exists', () => {
    const html = renderWhatIf(null, null, emptyDraft(), findings);
    expect(html).toContain('empty-state');
  });
});
