struct Vec {
    int v[4];
    int n;
};

/*@ requires 0 <= p->n <= 4; */
int array_sum(struct Vec *p) {
    int s = 0;
    int i = 0;
    while (i < p->n) {
        s = s + p->v[i];
        i = i + 1;
    }
    /*@ assert s == \sum(0, p->n - 1, k |-> p->v[k]); */
    return s;
}
