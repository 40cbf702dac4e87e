/*@ requires 0 <= y <= 4; */
int multiply(int x, int y) {
    int r = 0;
    int i = 0;
    while (i < y) {
        r = r + x;
        i = i + 1;
    }
    /*@ assert r == x * y; */
    return r;
}
