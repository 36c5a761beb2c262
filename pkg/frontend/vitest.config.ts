import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the e2e file trains a tiny model through the backend CLI in its
    // setup hook, so hooks get a far bigger budget than test bodies
    testTimeout: 20_000,
    hookTimeout: 240_000,
  },
});
