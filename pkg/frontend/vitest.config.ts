import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 20000,
    hookTimeout: 120000,
    // the e2e file drives one live server; parallel files would race it
    fileParallelism: false,
  },
});
