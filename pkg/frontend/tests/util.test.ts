import { describe, expect, it, vi } from "vitest";

import { clamp, debounce } from "../src/util.js";

describe("clamp", () => {
  it("pins values to the slot bounds", () => {
    expect(clamp(5, 0, 1)).toBe(1);
    expect(clamp(-3, 0, 1)).toBe(0);
    expect(clamp(0.4, 0, 1)).toBe(0.4);
  });
});

describe("debounce", () => {
  it("collapses a burst into the trailing call", () => {
    vi.useFakeTimers();
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 100);
    fn(1);
    fn(2);
    vi.advanceTimersByTime(50);
    fn(3);
    vi.advanceTimersByTime(99);
    expect(calls).toEqual([]);
    vi.advanceTimersByTime(1);
    expect(calls).toEqual([3]);
    vi.useRealTimers();
  });

  it("cancel drops the pending call", () => {
    vi.useFakeTimers();
    const calls: number[] = [];
    const fn = debounce((v: number) => calls.push(v), 100);
    fn(1);
    fn.cancel();
    vi.advanceTimersByTime(200);
    expect(calls).toEqual([]);
    vi.useRealTimers();
  });
});
