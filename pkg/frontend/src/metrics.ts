/** Evaluation plumbing: edit distance and greedy frame decoding. */

export function levenshtein(a: ArrayLike<number | string>,
                            b: ArrayLike<number | string>): number {
    const n = a.length;
    const m = b.length;
    let prev = Array.from({ length: m + 1 }, (_, j) => j);
    for (let i = 1; i <= n; i++) {
        const cur = new Array<number>(m + 1);
        cur[0] = i;
        for (let j = 1; j <= m; j++) {
            const sub = prev[j - 1] + (a[i - 1] === b[j - 1] ? 0 : 1);
            cur[j] = Math.min(sub, prev[j] + 1, cur[j - 1] + 1);
        }
        prev = cur;
    }
    return prev[m];
}

/**
 * Per-frame argmax, collapse runs, drop blanks (symbol 0). Ties keep the
 * lowest symbol index. Softmax is monotonic, so logits work as well as
 * posteriors here.
 */
export function greedyLabels(logits: number[][]): number[] {
    const out: number[] = [];
    let prev = -1;
    for (const row of logits) {
        let best = 0;
        for (let k = 1; k < row.length; k++) {
            if (row[k] > row[best]) best = k;
        }
        if (best !== prev && best !== 0) out.push(best);
        prev = best;
    }
    return out;
}
