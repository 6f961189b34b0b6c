/**
 * Graph-supervised sequence loss as a TensorFlow.js operation.
 *
 * The forward pass ships each item's logit rows to the backend batch
 * evaluator and the backward pass replays the gradient it returned,
 * scaled by the upstream cotangent. No loss math runs in JS.
 *
 * Infeasible items (graph admits no path of the item's length) surface
 * as +Infinity loss with an all-zero gradient, mirroring the backend's
 * batch contract.
 */

import * as tf from '@tensorflow/tfjs';

import { PrimaryClient } from './primary.js';

export interface GtcLossSpec {
    /** supervision graph text per batch item */
    graphs: string[];
    /** matrix column symbols; index 0 must be the blank marker */
    symbols: string[];
    /** valid frame counts per item; default is the full padded length */
    lengths?: number[];
    /** observer for the raw per-item losses of each forward pass */
    onLosses?: (losses: number[]) => void;
}

export function gtcLoss(client: PrimaryClient, spec: GtcLossSpec,
                        logits: tf.Tensor3D): tf.Tensor1D {
    const [b, t, k] = logits.shape;
    if (spec.graphs.length !== b) {
        throw new Error(`got ${spec.graphs.length} graphs for batch of ${b}`);
    }
    if (spec.symbols.length !== k) {
        throw new Error(`got ${spec.symbols.length} symbols for ${k} logit columns`);
    }
    const lengths = spec.lengths ?? new Array<number>(b).fill(t);
    if (lengths.length !== b) {
        throw new Error(`got ${lengths.length} lengths for batch of ${b}`);
    }
    for (const len of lengths) {
        if (!Number.isInteger(len) || len < 1 || len > t) {
            throw new Error(`item length ${len} outside 1..${t}`);
        }
    }

    const op = tf.customGrad((x, save) => {
        const data = (x as tf.Tensor3D).arraySync();
        const items = spec.graphs.map((graphText, i) => ({
            graphText,
            logits: data[i].slice(0, lengths[i]),
        }));
        const results = client.lossBatch(items, spec.symbols);
        const losses = results.map((r) => r.loss);
        spec.onLosses?.(losses);
        // padding rows get zero gradient; they never reached the backend
        const gradData = data.map((rows, i) =>
            rows.map((row, ti) =>
                ti < lengths[i] ? results[i].grad[ti] : row.map(() => 0)));
        const gradT = tf.tensor3d(gradData, [b, t, k]);
        (save as tf.GradSaveFunc)([gradT]);
        return {
            value: tf.tensor1d(losses),
            gradFunc: (dy: tf.Tensor, saved: tf.Tensor[]) =>
                dy.reshape([b, 1, 1]).mul(saved[0]),
        };
    });
    return op(logits) as tf.Tensor1D;
}
