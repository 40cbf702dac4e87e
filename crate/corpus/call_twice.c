int inc(int x) {
    return x + 1;
}

int call_twice(int a) {
    int b = inc(a);
    int c = inc(b);
    /*@ assert c == a + 2; */
    return c;
}
